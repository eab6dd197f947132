#include "relic/experiments.hpp"

#include <iomanip>
#include <sstream>

namespace relic {

void apply_decode_overrides(DecodeConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("decode config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "threshold") c.threshold = value.get<double>();
    else if (key == "per_pair_cap") c.per_pair_cap = value.get<int>();
    else if (key == "keep_parent") c.keep_parent = value.get<bool>();
    else if (key == "lattice_guided") c.lattice_guided = value.get<bool>();
    else throw DataError("unknown decode config key '" + key + "'");
  }
  c.validate();
}

void apply_metrics_overrides(MetricsConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("metrics config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "ks") c.ks = value.get<std::vector<int>>();
    else if (key == "primary_k") c.primary_k = value.get<int>();
    else if (key == "fn_sim_credit") c.fn_sim_credit = value.get<bool>();
    else throw DataError("unknown metrics config key '" + key + "'");
  }
  for (int k : c.ks)
    if (k < 1) throw DataError("metric K values must be >= 1");
  if (c.primary_k < 1) throw DataError("primary_k must be >= 1");
}

void apply_experiment_overrides(ExperimentConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("experiment config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "hyper") apply_hyper_overrides(c.hyper, value);
    else if (key == "train") apply_train_overrides(c.train, value);
    else if (key == "decode") apply_decode_overrides(c.decode, value);
    else if (key == "metrics") apply_metrics_overrides(c.metrics, value);
    else if (key == "model") {
      for (const auto& [mk, mv] : value.items()) {
        if (mk == "inference_iterations") c.inference_iterations = mv.get<int>();
        else if (mk == "init_seed") c.init_seed = mv.get<std::uint64_t>();
        else if (mk == "pair_dim") c.pair_dim = mv.get<int>();
        else if (mk == "joint_dim") c.joint_dim = mv.get<int>();
        else if (mk == "train_split") c.train_split = mv.get<std::string>();
        else if (mk == "eval_split") c.eval_split = mv.get<std::string>();
        else throw DataError("unknown model config key '" + mk + "'");
      }
    } else {
      throw DataError("unknown config section '" + key + "'");
    }
  }
  c.metrics.threshold = c.decode.threshold;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  return {{"hyper", hyper_to_json(c.hyper)},
          {"train", train_config_to_json(c.train)},
          {"decode",
           {{"threshold", c.decode.threshold},
            {"per_pair_cap", c.decode.per_pair_cap},
            {"keep_parent", c.decode.keep_parent},
            {"lattice_guided", c.decode.lattice_guided}}},
          {"metrics", {{"ks", c.metrics.ks}, {"primary_k", c.metrics.primary_k}, {"fn_sim_credit", c.metrics.fn_sim_credit}}},
          {"model",
           {{"inference_iterations", c.inference_iterations},
            {"init_seed", c.init_seed},
            {"pair_dim", c.pair_dim},
            {"joint_dim", c.joint_dim},
            {"train_split", c.train_split},
            {"eval_split", c.eval_split}}}};
}

std::vector<Variant> ablation_ladder() {
  Variant v{"baseline", {false, false, false, false}, false};
  std::vector<Variant> out{v};
  v.name = "+SRL";
  v.toggles.lattice_reasoning = true;
  out.push_back(v);
  v.name = "+LRC";
  v.toggles.latent_completion = true;
  out.push_back(v);
  v.name = "+RNE";
  v.toggles.reliable_negatives = true;
  out.push_back(v);
  v.name = "+PUGL";
  v.toggles.pu_learning = true;
  out.push_back(v);
  v.name = "full";
  v.lattice_guided = true;
  out.push_back(v);
  return out;
}

Variant full_variant() { return ablation_ladder().back(); }
Variant baseline_variant() { return ablation_ladder().front(); }

Workbench make_workbench(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab,
                         const RelationLattice& lattice, const DropLog* drops, const ExperimentConfig& config) {
  Workbench b;
  b.vocab = &vocab;
  b.lattice = &lattice;
  b.drops = drops;
  b.train_scenes = filter_split(scenes, config.train_split);
  b.eval_scenes = filter_split(scenes, config.eval_split);
  if (b.train_scenes.empty()) throw DataError("no scenes in training split '" + config.train_split + "'");
  if (b.eval_scenes.empty()) throw DataError("no scenes in evaluation split '" + config.eval_split + "'");
  return b;
}

VariantResult run_variant(const Workbench& bench, const Variant& variant, const ExperimentConfig& config) {
  VariantResult r;
  r.name = variant.name;
  const ModelDims dims = dims_for(bench.train_scenes, *bench.vocab, config.pair_dim, config.joint_dim);
  const ModelParams init = init_params(dims, config.hyper, config.init_seed);
  TrainConfig tc = config.train;
  tc.toggles = variant.toggles;
  r.training = train(bench.train_scenes, *bench.vocab, *bench.lattice, init, tc);

  InferenceConfig ic;
  ic.decode = config.decode;
  ic.decode.lattice_guided = variant.lattice_guided;
  ic.posterior_iterations = config.inference_iterations;
  ic.toggles = variant.toggles;
  ic.threads = tc.threads;
  const InferenceResult inf = infer(r.training.params, *bench.lattice, *bench.vocab, bench.eval_scenes, ic);
  MetricsConfig mc = config.metrics;
  mc.threshold = ic.decode.threshold;
  r.report = evaluate_graphs(inf.graphs, inf.scores, bench.eval_scenes, bench.drops, *bench.lattice, *bench.vocab, mc);
  return r;
}

std::vector<VariantResult> run_ablation(const Workbench& bench, const ExperimentConfig& config) {
  std::vector<VariantResult> out;
  for (const auto& v : ablation_ladder()) out.push_back(run_variant(bench, v, config));
  return out;
}

std::vector<VariantResult> run_sweep_k(const Workbench& bench, const std::vector<int>& ks,
                                       const ExperimentConfig& config) {
  std::vector<VariantResult> out;
  for (int k : ks) {
    if (k < 1) throw DataError("candidate count K must be >= 1");
    ExperimentConfig c = config;
    c.hyper.top_k = k;
    auto r = run_variant(bench, full_variant(), c);
    r.name = "K=" + std::to_string(k);
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json results_to_json(const std::vector<VariantResult>& results, const PredicateVocabulary& vocab) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results)
    j.push_back({{"name", r.name},
                 {"diverged", r.training.diverged},
                 {"steps", r.training.log.size()},
                 {"final_loss", r.training.log.empty() ? 0.0 : r.training.log.back().loss.L_total},
                 {"metrics", report_to_json(r.report, vocab)}});
  return j;
}

namespace {

std::string pct(std::optional<double> v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v;
  return s.str();
}

struct Row {
  std::string name, R, mR, S, U, HM, FN, LC, Red;
};

Row row_for(const VariantResult& r, int k) {
  const KMetrics* m = r.report.at(k);
  Row row;
  row.name = r.name;
  if (m) {
    row.R = pct(m->recall.value);
    row.mR = pct(m->open_vocab.mR);
    row.S = pct(m->open_vocab.S_mR);
    row.U = pct(m->open_vocab.U_mR);
    row.HM = pct(m->open_vocab.HM);
  }
  row.FN = pct(r.report.fn_recall);
  row.LC = pct(r.report.lat_cons);
  row.Red = pct(r.report.redundancy);
  return row;
}

}  // namespace

std::string results_to_csv(const std::vector<VariantResult>& results, int k) {
  std::ostringstream out;
  out << "variant,R@" << k << ",mR@" << k << ",S-mR,U-mR,HM,FN-Recall,Lat-Cons,Redundancy\n";
  for (const auto& r : results) {
    const Row w = row_for(r, k);
    out << w.name << ',' << w.R << ',' << w.mR << ',' << w.S << ',' << w.U << ',' << w.HM << ',' << w.FN << ','
        << w.LC << ',' << w.Red << '\n';
  }
  return out.str();
}

std::string results_to_table(const std::vector<VariantResult>& results, int k) {
  std::ostringstream out;
  const std::vector<std::string> head{"variant", "R@" + std::to_string(k), "mR@" + std::to_string(k), "S-mR", "U-mR",
                                      "HM", "FN-Rec", "LatCons", "Redund"};
  out << std::left << std::setw(10) << head[0] << std::right;
  for (std::size_t i = 1; i < head.size(); ++i) out << std::setw(9) << head[i];
  out << '\n';
  for (const auto& r : results) {
    const Row w = row_for(r, k);
    out << std::left << std::setw(10) << w.name << std::right;
    for (const auto* f : {&w.R, &w.mR, &w.S, &w.U, &w.HM, &w.FN, &w.LC, &w.Red})
      out << std::setw(9) << (f->empty() ? "-" : *f);
    out << '\n';
  }
  return out.str();
}

}  // namespace relic
