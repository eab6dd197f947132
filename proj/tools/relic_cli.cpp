#include "relic/experiments.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relic;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Global {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  int threads = 1;
  std::string format = "table";
};

// Config file sections; each command reads the ones it needs.
struct FileConfig {
  json synth = json::object();
  json experiment = json::object();
};

FileConfig load_config(const std::string& path) {
  FileConfig fc;
  if (path.empty()) return fc;
  if (!fs::exists(path)) throw DataError("config file not found: " + path);
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw DataError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "synth") fc.synth = value;
    else if (key == "hyper" || key == "train" || key == "decode" || key == "metrics" || key == "model")
      fc.experiment[key] = value;
    else throw DataError("unknown config section '" + key + "'");
  }
  return fc;
}

std::uint64_t sub_seed(std::uint64_t seed, const char* name) { return seed ^ fnv1a64(name); }

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " not found: " + p.string());
}

json parse_json_file(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

std::vector<json> parse_jsonl_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct Dataset {
  PredicateVocabulary vocab;
  RelationLattice lattice;
  std::vector<SceneInstance> scenes;
  std::optional<DropLog> drops;
};

// Lattice precedence: explicit file, then lattice.json in the dataset, then
// a fresh build from rules.json.
Dataset load_dataset(const std::string& data_dir, const std::string& lattice_path, double tau_sim) {
  const fs::path dir(data_dir);
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + data_dir);
  require_file(dir / "vocab.json", "vocabulary");
  require_file(dir / "scenes.jsonl", "scene file");
  if (!lattice_path.empty()) require_file(lattice_path, "lattice");

  Dataset d;
  d.vocab = vocabulary_from_json(parse_json_file(dir / "vocab.json"));
  if (!lattice_path.empty()) {
    d.lattice = lattice_from_json(parse_json_file(lattice_path), d.vocab.size());
  } else if (fs::is_regular_file(dir / "lattice.json")) {
    d.lattice = lattice_from_json(parse_json_file(dir / "lattice.json"), d.vocab.size());
  } else {
    require_file(dir / "rules.json", "rules");
    d.lattice = build_lattice(d.vocab, rules_from_json(parse_json_file(dir / "rules.json")), tau_sim);
  }
  d.scenes = read_scenes_jsonl(dir / "scenes.jsonl", d.vocab);
  if (fs::is_regular_file(dir / "droplog.jsonl")) d.drops = read_drop_log_jsonl(dir / "droplog.jsonl", d.vocab);
  return d;
}

// Writes every file atomically, then a manifest with their hashes. The
// manifest carries no timestamps so identical runs hash identically.
void write_outputs(const std::string& out, const std::string& command,
                   const std::vector<std::pair<std::string, std::string>>& files, json extra = json::object()) {
  if (out.empty()) throw UsageError("--out is required for " + command);
  fs::create_directories(out);
  json manifest = {{"format", "relic-run"}, {"version", 1}, {"command", command}};
  for (auto& [k, v] : extra.items()) manifest[k] = v;
  manifest["files"] = json::array();
  for (const auto& [name, contents] : files) {
    write_file_atomic(fs::path(out) / name, contents);
    manifest["files"].push_back({{"name", name}, {"sha256", sha256_hex(contents)}, {"bytes", contents.size()}});
  }
  write_file_atomic(fs::path(out) / "manifest.json", manifest.dump(2) + "\n");
}

Variant variant_named(const std::string& name) {
  for (const auto& v : ablation_ladder())
    if (v.name == name) return v;
  throw UsageError("unknown variant '" + name + "' (baseline, +SRL, +LRC, +RNE, +PUGL, full)");
}

std::vector<const SceneInstance*> pointers(const std::vector<SceneInstance>& scenes) {
  std::vector<const SceneInstance*> out;
  for (const auto& s : scenes) out.push_back(&s);
  return out;
}

// Flags shared by the commands that train a model.
struct TrainFlags {
  std::optional<int> warmup_steps, steps, batch_size, top_k;
  std::optional<double> lr;
  std::string q_gradient;

  void add(CLI::App* cmd) {
    cmd->add_option("--warmup-steps", warmup_steps, "Stage-1 steps");
    cmd->add_option("--steps", steps, "Joint-training steps");
    cmd->add_option("--batch-size", batch_size, "Scenes per batch");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--top-k", top_k, "Candidates per pair");
    cmd->add_option("--q-gradient", q_gradient, "frozen, recompute or live");
  }
};

ExperimentConfig experiment_config(const Global& g, const FileConfig& fc, const TrainFlags* tf) {
  ExperimentConfig c;
  apply_experiment_overrides(c, fc.experiment);
  if (g.seed) {
    c.train.seed = sub_seed(*g.seed, "train");
    c.init_seed = sub_seed(*g.seed, "init");
  }
  c.train.threads = g.threads;
  if (tf) {
    if (tf->warmup_steps) c.train.warmup_steps = *tf->warmup_steps;
    if (tf->steps) c.train.joint_steps = *tf->steps;
    if (tf->batch_size) c.train.batch_size = *tf->batch_size;
    if (tf->lr) c.train.learning_rate = *tf->lr;
    if (tf->top_k) c.hyper.top_k = *tf->top_k;
    if (!tf->q_gradient.empty()) c.train.q_gradient = q_gradient_mode_from_string(tf->q_gradient);
  }
  c.train.validate();
  c.decode.validate();
  if (c.hyper.top_k < 1) throw DataError("top_k must be >= 1");
  return c;
}

void emit(const Global& g, const json& as_json, const std::string& as_csv, const std::string& as_table) {
  if (g.format == "json") std::cout << as_json.dump(2) << '\n';
  else if (g.format == "csv") std::cout << as_csv;
  else std::cout << as_table;
}

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::optional<int> scenes, predicates;
  std::optional<double> unseen_fraction, p_keep, p_coarse;
};

int cmd_synth(const Global& g, const SynthFlags& f) {
  const FileConfig fc = load_config(g.config);
  SynthConfig c;
  apply_synth_overrides(c, fc.synth);
  if (g.seed) c.seed = *g.seed;
  if (f.scenes) c.scenes = *f.scenes;
  if (f.predicates) c.predicate_count = *f.predicates;
  if (f.unseen_fraction) c.unseen_fraction = *f.unseen_fraction;
  if (f.p_keep) c.p_keep = *f.p_keep;
  if (f.p_coarse) c.p_coarse = *f.p_coarse;
  c.validate();
  if (g.out.empty()) throw UsageError("--out is required for synth");
  const SynthDataset data = generate_dataset(c, g.threads);
  const json manifest = write_dataset(data, g.out);

  std::size_t annotated = 0, dropped = 0;
  for (const auto& s : data.scenes) annotated += s.annotations.size();
  for (const auto& [id, recs] : data.drops) dropped += recs.size();
  const json summary = {{"scenes", data.scenes.size()},
                        {"predicates", data.world.vocab.size()},
                        {"annotated_triplets", annotated},
                        {"dropped_triplets", dropped},
                        {"out", g.out}};
  std::ostringstream csv, table;
  csv << "scenes,predicates,annotated_triplets,dropped_triplets\n"
      << data.scenes.size() << ',' << data.world.vocab.size() << ',' << annotated << ',' << dropped << '\n';
  table << "wrote " << data.scenes.size() << " scenes over " << data.world.vocab.size() << " predicates to " << g.out
        << "\n  annotated " << annotated << ", dropped " << dropped << '\n';
  emit(g, summary, csv.str(), table.str());
  return kOk;
}

int cmd_build_lattice(const Global& g, const std::string& vocab_path, const std::string& rules_path, double tau) {
  require_file(vocab_path, "vocabulary");
  require_file(rules_path, "rules");
  const PredicateVocabulary vocab = vocabulary_from_json(parse_json_file(vocab_path));
  const RelationLattice lattice = build_lattice(vocab, rules_from_json(parse_json_file(rules_path)), tau);
  const LatticeReport report = validate_lattice(lattice);
  if (!report.ok()) {
    for (const auto& v : report.violations) std::cerr << "lattice: " << v << '\n';
    throw DataError("lattice failed validation");
  }
  write_outputs(g.out, "build-lattice", {{"lattice.json", lattice_to_json(lattice, vocab).dump(2) + "\n"}},
                {{"tau_sim", tau}});
  const json summary = {{"nodes", lattice.node_count()},
                        {"sim", lattice.count(EdgeKind::Sim)},
                        {"ent", lattice.count(EdgeKind::Ent)},
                        {"con", lattice.count(EdgeKind::Con)}};
  std::ostringstream csv, table;
  csv << "nodes,sim,ent,con\n"
      << lattice.node_count() << ',' << lattice.count(EdgeKind::Sim) << ',' << lattice.count(EdgeKind::Ent) << ','
      << lattice.count(EdgeKind::Con) << '\n';
  table << "lattice: " << lattice.node_count() << " nodes, " << lattice.count(EdgeKind::Sim) << " Sim, "
        << lattice.count(EdgeKind::Ent) << " Ent, " << lattice.count(EdgeKind::Con) << " Con edges\n";
  emit(g, summary, csv.str(), table.str());
  return kOk;
}

struct DataFlags {
  std::string data, lattice;
  double tau_sim = kDefaultSimThreshold;

  void add(CLI::App* cmd) {
    cmd->add_option("--data", data, "Dataset directory")->required();
    cmd->add_option("--lattice", lattice, "Lattice file (default: from the dataset)");
    cmd->add_option("--tau-sim", tau_sim, "Similarity threshold when building from rules");
  }
  Dataset load() const { return load_dataset(data, lattice, tau_sim); }
};

int cmd_train(const Global& g, const DataFlags& df, const TrainFlags& tf, const std::string& variant_name) {
  const Variant variant = variant_named(variant_name);
  const FileConfig fc = load_config(g.config);
  const ExperimentConfig c = experiment_config(g, fc, &tf);
  if (g.out.empty()) throw UsageError("--out is required for train");
  const Dataset d = df.load();
  const auto train_scenes = filter_split(d.scenes, c.train_split);
  if (train_scenes.empty()) throw DataError("no scenes in training split '" + c.train_split + "'");

  const ModelDims dims = dims_for(train_scenes, d.vocab, c.pair_dim, c.joint_dim);
  TrainConfig tc = c.train;
  tc.toggles = variant.toggles;
  const TrainResult r = train(train_scenes, d.vocab, d.lattice, init_params(dims, c.hyper, c.init_seed), tc);

  json cfg = experiment_config_to_json(c);
  cfg["variant"] = variant.name;
  write_outputs(g.out, "train",
                {{"params.json", params_to_json(r.params).dump() + "\n"}, {"train_log.csv", training_log_csv(r.log)}},
                {{"config", cfg}, {"diverged", r.diverged}});
  const double last = r.log.empty() ? 0.0 : r.log.back().loss.L_total;
  const json summary = {{"steps", r.log.size()}, {"final_loss", last}, {"diverged", r.diverged}, {"message", r.message}};
  std::ostringstream csv, table;
  csv << "steps,final_loss,diverged\n" << r.log.size() << ',' << last << ',' << (r.diverged ? 1 : 0) << '\n';
  table << "trained " << variant.name << " for " << r.log.size() << " steps, final L_total " << last << '\n';
  if (r.diverged) table << "diverged: " << r.message << '\n';
  emit(g, summary, csv.str(), table.str());
  return r.diverged ? kNumerical : kOk;
}

int cmd_infer(const Global& g, const DataFlags& df, const std::string& params_path, const std::string& variant_name,
              const std::optional<std::string>& split, bool transductive, std::optional<double> threshold,
              std::optional<int> cap) {
  const Variant variant = variant_named(variant_name);
  const FileConfig fc = load_config(g.config);
  const ExperimentConfig c = experiment_config(g, fc, nullptr);
  require_file(params_path, "parameter file");
  if (g.out.empty()) throw UsageError("--out is required for infer");
  const Dataset d = df.load();
  ModelParams params = params_from_json(parse_json_file(params_path));
  if (fc.experiment.contains("hyper")) apply_hyper_overrides(params.hyper, fc.experiment["hyper"]);

  const auto scenes = filter_split(d.scenes, split.value_or(c.eval_split));
  if (scenes.empty()) throw DataError("no scenes to infer on");
  InferenceConfig ic;
  ic.decode = c.decode;
  ic.decode.lattice_guided = variant.lattice_guided;
  if (threshold) ic.decode.threshold = *threshold;
  if (cap) ic.decode.per_pair_cap = *cap;
  ic.decode.validate();
  ic.posterior_iterations = c.inference_iterations;
  ic.transductive = transductive;
  ic.toggles = variant.toggles;
  ic.threads = g.threads;
  const InferenceResult r = infer(params, d.lattice, d.vocab, scenes, ic);

  std::string graphs, posteriors;
  std::size_t triplets = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    graphs += graph_to_json(r.graphs[i], d.vocab).dump() + "\n";
    posteriors += posterior_table_to_json(r.tables[i], d.vocab, params.hyper.lambda_q).dump() + "\n";
    triplets += r.graphs[i].triplets.size();
  }
  write_outputs(g.out, "infer", {{"graphs.jsonl", graphs}, {"posteriors.jsonl", posteriors}},
                {{"variant", variant.name},
                 {"decode",
                  {{"threshold", ic.decode.threshold},
                   {"per_pair_cap", ic.decode.per_pair_cap},
                   {"keep_parent", ic.decode.keep_parent},
                   {"lattice_guided", ic.decode.lattice_guided}}}});
  const json summary = {{"scenes", scenes.size()}, {"triplets", triplets}};
  std::ostringstream csv, table;
  csv << "scenes,triplets\n" << scenes.size() << ',' << triplets << '\n';
  table << "decoded " << triplets << " triplets over " << scenes.size() << " scenes\n";
  emit(g, summary, csv.str(), table.str());
  return kOk;
}

int cmd_eval(const Global& g, const DataFlags& df, const std::string& graphs_path, std::string posteriors_path) {
  const FileConfig fc = load_config(g.config);
  const ExperimentConfig c = experiment_config(g, fc, nullptr);
  require_file(graphs_path, "graph file");
  if (posteriors_path.empty()) posteriors_path = (fs::path(graphs_path).parent_path() / "posteriors.jsonl").string();
  const Dataset d = df.load();

  std::map<std::string, const SceneInstance*> by_id;
  for (const auto& s : d.scenes) by_id[s.id] = &s;
  std::vector<SceneGraph> graphs;
  std::vector<SceneInstance> scenes;
  for (const auto& j : parse_jsonl_file(graphs_path)) {
    graphs.push_back(graph_from_json(j, d.vocab));
    auto it = by_id.find(graphs.back().scene_id);
    if (it == by_id.end()) throw DataError("graph for unknown scene '" + graphs.back().scene_id + "'");
    scenes.push_back(*it->second);
  }
  // Without posterior tables only the decoded triplets' own scores are known.
  std::vector<SceneScores> scores;
  if (fs::is_regular_file(posteriors_path)) {
    std::map<std::string, SceneScores> table;
    for (const auto& j : parse_jsonl_file(posteriors_path)) {
      SceneScores s = scores_from_posterior_json(j, d.vocab);
      table[s.scene_id] = std::move(s);
    }
    for (const auto& gr : graphs) {
      auto it = table.find(gr.scene_id);
      if (it == table.end()) throw DataError("no posterior table for scene '" + gr.scene_id + "'");
      scores.push_back(it->second);
    }
  } else {
    for (const auto& gr : graphs) {
      SceneScores s;
      s.scene_id = gr.scene_id;
      std::map<OrderedPair, std::map<PredicateId, double>> per_pair;
      for (const auto& t : gr.triplets) per_pair[{t.subj, t.obj}][t.pred] = t.score;
      for (auto& [pair, m] : per_pair) s.pairs.push_back({pair, m});
      scores.push_back(std::move(s));
    }
  }

  const MetricsReport report =
      evaluate_graphs(graphs, scores, scenes, d.drops ? &*d.drops : nullptr, d.lattice, d.vocab, c.metrics);
  const json j = report_to_json(report, d.vocab);
  const std::string csv = report_to_csv(report);
  if (!g.out.empty()) write_outputs(g.out, "eval", {{"metrics.json", j.dump(2) + "\n"}, {"metrics.csv", csv}});
  emit(g, j, csv, report_to_table(report));
  return kOk;
}

int write_results(const Global& g, const std::string& command, const std::vector<VariantResult>& results,
                  const ExperimentConfig& c, const PredicateVocabulary& vocab, json extra = json::object()) {
  const json j = results_to_json(results, vocab);
  const std::string csv = results_to_csv(results, c.metrics.primary_k);
  extra["config"] = experiment_config_to_json(c);
  write_outputs(g.out, command, {{command + ".json", j.dump(2) + "\n"}, {command + ".csv", csv}}, extra);
  emit(g, j, csv, results_to_table(results, c.metrics.primary_k));
  for (const auto& r : results)
    if (r.training.diverged) {
      std::cerr << r.name << " diverged: " << r.training.message << '\n';
      return kNumerical;
    }
  return kOk;
}

int cmd_ablate(const Global& g, const DataFlags& df, const TrainFlags& tf) {
  const FileConfig fc = load_config(g.config);
  const ExperimentConfig c = experiment_config(g, fc, &tf);
  if (g.out.empty()) throw UsageError("--out is required for ablate");
  const Dataset d = df.load();
  const Workbench bench = make_workbench(d.scenes, d.vocab, d.lattice, d.drops ? &*d.drops : nullptr, c);
  return write_results(g, "ablation", run_ablation(bench, c), c, d.vocab);
}

int cmd_sweep_k(const Global& g, const DataFlags& df, const TrainFlags& tf, const std::vector<int>& ks) {
  const FileConfig fc = load_config(g.config);
  const ExperimentConfig c = experiment_config(g, fc, &tf);
  if (g.out.empty()) throw UsageError("--out is required for sweep-k");
  for (int k : ks)
    if (k < 1) throw UsageError("--ks values must be >= 1");
  const Dataset d = df.load();
  const Workbench bench = make_workbench(d.scenes, d.vocab, d.lattice, d.drops ? &*d.drops : nullptr, c);
  return write_results(g, "sweep_k", run_sweep_k(bench, ks, c), c, d.vocab, {{"ks", ks}});
}

int cmd_inspect(const Global& g, const DataFlags& df, const std::string& scene_id, const std::string& graphs_path,
                const std::string& posteriors_path) {
  const Dataset d = df.load();
  if (scene_id.empty()) {
    const LatticeReport rep = validate_lattice(d.lattice);
    std::map<std::string, std::size_t> splits;
    for (const auto& s : d.scenes) ++splits[s.split];
    json j = {{"scenes", d.scenes.size()},
              {"splits", splits},
              {"predicates", d.vocab.size()},
              {"lattice",
               {{"sim", d.lattice.count(EdgeKind::Sim)},
                {"ent", d.lattice.count(EdgeKind::Ent)},
                {"con", d.lattice.count(EdgeKind::Con)},
                {"valid", rep.ok()}}}};
    std::ostringstream table;
    table << d.scenes.size() << " scenes, " << d.vocab.size() << " predicates\n";
    for (const auto& [name, n] : splits) table << "  split " << name << ": " << n << '\n';
    table << "lattice: " << d.lattice.count(EdgeKind::Sim) << " Sim, " << d.lattice.count(EdgeKind::Ent) << " Ent, "
          << d.lattice.count(EdgeKind::Con) << " Con, " << (rep.ok() ? "valid" : "INVALID") << '\n';
    emit(g, j, "", table.str());
    return kOk;
  }

  const SceneInstance* scene = nullptr;
  for (const auto& s : d.scenes)
    if (s.id == scene_id) scene = &s;
  if (!scene) throw DataError("scene '" + scene_id + "' not in dataset");

  auto phrase = [&](const Triplet& t) {
    return scene->object(t.subj).category + "#" + std::to_string(t.subj) + " " + d.vocab[t.pred].phrase + " " +
           scene->object(t.obj).category + "#" + std::to_string(t.obj);
  };
  json j = {{"scene", scene_to_json(*scene, d.vocab)}};
  std::ostringstream table;
  table << "scene " << scene->id << " (" << scene->split << "), " << scene->objects.size() << " objects\n";
  table << "annotations:\n";
  for (const auto& t : scene->annotations.triplets()) table << "  " << phrase(t) << '\n';
  if (scene->truth) {
    table << "truth:\n";
    for (const auto& t : *scene->truth) table << "  " << phrase(t) << '\n';
  }
  if (d.drops) {
    auto it = d.drops->find(scene->id);
    if (it != d.drops->end()) {
      j["dropped"] = drop_records_to_json(scene->id, it->second, d.vocab)["dropped"];
      table << "dropped:\n";
      for (const auto& r : it->second) table << "  " << phrase(r.triplet) << "  [" << to_string(r.kind) << "]\n";
    }
  }
  if (!graphs_path.empty()) {
    require_file(graphs_path, "graph file");
    for (const auto& gj : parse_jsonl_file(graphs_path))
      if (gj.value("scene_id", "") == scene->id) {
        j["graph"] = gj;
        table << render_graph(graph_from_json(gj, d.vocab), d.vocab, scene);
      }
  }
  if (!posteriors_path.empty()) {
    require_file(posteriors_path, "posterior file");
    for (const auto& pj : parse_jsonl_file(posteriors_path))
      if (pj.value("scene_id", "") == scene->id) {
        j["posteriors"] = pj;
        table << "posteriors:\n";
        for (const auto& p : pj.at("pairs"))
          for (const auto& e : p.at("entries"))
            table << "  (" << p.at("subj") << "," << p.at("obj") << ") " << e.at("predicate").get<std::string>()
                  << "  s~=" << e.at("s_tilde").get<double>() << " q=" << e.at("q").get<double>()
                  << " rho=" << e.at("rho").get<double>() << '\n';
      }
  }
  emit(g, j, "", table.str());
  return kOk;
}

int cmd_check_grad(const Global& g, const DataFlags& df, const TrainFlags& tf, const std::string& params_path,
                   std::size_t coords, std::size_t n_scenes, double eps, double tol, const std::string& variant_name) {
  const Variant variant = variant_named(variant_name);
  const FileConfig fc = load_config(g.config);
  const ExperimentConfig c = experiment_config(g, fc, &tf);
  const Dataset d = df.load();
  auto scenes = filter_split(d.scenes, c.train_split);
  if (scenes.size() < n_scenes) throw DataError("not enough training scenes for the requested batch");
  scenes.resize(n_scenes);

  ModelParams params;
  if (!params_path.empty()) {
    require_file(params_path, "parameter file");
    params = params_from_json(parse_json_file(params_path));
  } else {
    params = init_params(dims_for(scenes, d.vocab, c.pair_dim, c.joint_dim), c.hyper, c.init_seed);
  }
  const auto ptrs = pointers(scenes);
  ObjectiveOptions opts;
  opts.toggles = variant.toggles;
  opts.prop = variant.toggles.propagation(params.hyper);
  opts.q_gradient = c.train.q_gradient;
  const auto tables =
      build_posterior_tables(params, d.lattice, d.vocab, ptrs, opts.prop, variant.toggles.completion(true), 1, g.threads);
  std::vector<const PosteriorTable*> tptr;
  for (const auto& t : tables) tptr.push_back(&t);
  const std::uint64_t seed = g.seed ? sub_seed(*g.seed, "check-grad") : 1;
  const GradientCheckReport rep = check_gradients(params, d.lattice, d.vocab, ptrs, tptr, opts, eps, coords, seed);

  const bool pass = rep.max_rel_error < tol;
  const json j = {{"coordinates", rep.coordinates},
                  {"max_rel_error", rep.max_rel_error},
                  {"max_abs_error_zero_grad", rep.max_abs_error_zero_grad},
                  {"tolerance", tol},
                  {"pass", pass}};
  std::ostringstream csv, table;
  csv << "coordinates,max_rel_error,max_abs_error_zero_grad,pass\n"
      << rep.coordinates << ',' << rep.max_rel_error << ',' << rep.max_abs_error_zero_grad << ',' << (pass ? 1 : 0)
      << '\n';
  table << "checked " << rep.coordinates << " coordinates: max relative error " << rep.max_rel_error
        << ", max |numeric| at zero analytic " << rep.max_abs_error_zero_grad << (pass ? "  ok\n" : "  FAIL\n");
  if (!g.out.empty()) write_outputs(g.out, "check-grad", {{"gradcheck.json", j.dump(2) + "\n"}});
  emit(g, j, csv.str(), table.str());
  return pass ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relic: open-vocabulary scene graphs under incomplete annotation"};
  app.require_subcommand(1);
  app.fallthrough();

  Global g;
  app.add_option("--seed", g.seed, "Run seed; all sub-seeds derive from it");
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Stdout format")->check(CLI::IsMember({"json", "csv", "table"}));

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark");
  synth->add_option("--scenes", sf.scenes, "Number of scenes");
  synth->add_option("--predicates", sf.predicates, "Vocabulary size");
  synth->add_option("--unseen-fraction", sf.unseen_fraction, "Fraction of fine predicates never annotated");
  synth->add_option("--p-keep", sf.p_keep, "Annotation keep probability");
  synth->add_option("--p-coarse", sf.p_coarse, "Granularity collapse probability");

  std::string vocab_path, rules_path;
  double tau = kDefaultSimThreshold;
  auto* lat = app.add_subcommand("build-lattice", "Build a relation lattice from vocabulary and rules");
  lat->add_option("--vocab", vocab_path, "vocab.json")->required();
  lat->add_option("--rules", rules_path, "rules.json")->required();
  lat->add_option("--tau-sim", tau, "Similarity threshold");

  DataFlags train_df, infer_df, eval_df, ablate_df, sweep_df, inspect_df, grad_df;
  TrainFlags train_tf, ablate_tf, sweep_tf, grad_tf;
  std::string train_variant = "full", infer_variant = "full", grad_variant = "full";

  auto* tr = app.add_subcommand("train", "Train a model");
  train_df.add(tr);
  train_tf.add(tr);
  tr->add_option("--variant", train_variant, "Ablation variant");

  std::string infer_params;
  std::optional<std::string> infer_split;
  bool transductive = false;
  std::optional<double> threshold;
  std::optional<int> cap;
  auto* inf = app.add_subcommand("infer", "Decode scene graphs with a trained model");
  infer_df.add(inf);
  inf->add_option("--params", infer_params, "params.json from train")->required();
  inf->add_option("--variant", infer_variant, "Ablation variant");
  inf->add_option("--split", infer_split, "Scene split (empty: all)");
  inf->add_flag("--transductive", transductive, "Clamp annotated triplets of the evaluated scenes");
  inf->add_option("--threshold", threshold, "Decode threshold");
  inf->add_option("--cap", cap, "Per-pair cap");

  std::string eval_graphs, eval_posteriors;
  auto* ev = app.add_subcommand("eval", "Score decoded graphs");
  eval_df.add(ev);
  ev->add_option("--graphs", eval_graphs, "graphs.jsonl from infer")->required();
  ev->add_option("--posteriors", eval_posteriors, "posteriors.jsonl (default: next to graphs)");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate the ablation ladder");
  ablate_df.add(ab);
  ablate_tf.add(ab);

  std::vector<int> ks{5, 15, 30};
  auto* sw = app.add_subcommand("sweep-k", "Candidate-count sensitivity");
  sweep_df.add(sw);
  sweep_tf.add(sw);
  sw->add_option("--ks", ks, "Candidate counts")->delimiter(',');

  std::string inspect_scene, inspect_graphs, inspect_posteriors;
  auto* ins = app.add_subcommand("inspect", "Show a dataset summary or one scene");
  inspect_df.add(ins);
  ins->add_option("--scene", inspect_scene, "Scene id");
  ins->add_option("--graphs", inspect_graphs, "graphs.jsonl");
  ins->add_option("--posteriors", inspect_posteriors, "posteriors.jsonl");

  std::string grad_params;
  std::size_t grad_coords = 200, grad_scenes = 2;
  double grad_eps = 1e-5, grad_tol = 1e-4;
  auto* cg = app.add_subcommand("check-grad", "Finite-difference gradient check");
  grad_df.add(cg);
  grad_tf.add(cg);
  cg->add_option("--params", grad_params, "params.json (default: fresh initialisation)");
  cg->add_option("--coords", grad_coords, "Random coordinates, 0 = all");
  cg->add_option("--scenes", grad_scenes, "Batch size")->check(CLI::PositiveNumber);
  cg->add_option("--eps", grad_eps, "Central-difference step");
  cg->add_option("--tol", grad_tol, "Maximum relative error");
  cg->add_option("--variant", grad_variant, "Ablation variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(g, sf);
    if (*lat) return cmd_build_lattice(g, vocab_path, rules_path, tau);
    if (*tr) return cmd_train(g, train_df, train_tf, train_variant);
    if (*inf)
      return cmd_infer(g, infer_df, infer_params, infer_variant, infer_split, transductive, threshold, cap);
    if (*ev) return cmd_eval(g, eval_df, eval_graphs, eval_posteriors);
    if (*ab) return cmd_ablate(g, ablate_df, ablate_tf);
    if (*sw) return cmd_sweep_k(g, sweep_df, sweep_tf, ks);
    if (*ins) return cmd_inspect(g, inspect_df, inspect_scene, inspect_graphs, inspect_posteriors);
    if (*cg)
      return cmd_check_grad(g, grad_df, grad_tf, grad_params, grad_coords, grad_scenes, grad_eps, grad_tol,
                            grad_variant);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
