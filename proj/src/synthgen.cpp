#include "relic/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace relic {

void SynthConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError(std::string(name) + " must lie in [0, 1]");
  };
  prob(p_keep, "p_keep");
  prob(p_coarse, "p_coarse");
  prob(unseen_fraction, "unseen_fraction");
  prob(relation_rate, "relation_rate");
  prob(extra_relation_rate, "extra_relation_rate");
  prob(test_fraction, "test_fraction");
  if (predicate_count < 1) throw DataError("predicate_count must be positive");
  if (tree_depth < 1 || branching < 1) throw DataError("tree_depth and branching must be positive");
  if (synonym_clusters < 0 || synonym_size < 1) throw DataError("synonym cluster settings must be positive");
  if (contradiction_pairs < 0) throw DataError("contradiction_pairs must be non-negative");
  if (embed_dim < 2 || object_dim < 1) throw DataError("embedding dimensions must be >= 2 and >= 1");
  if (embed_noise < 0.0 || child_offset < 0.0 || feature_noise < 0.0 || signal < 0.0 || zipf < 0.0)
    throw DataError("noise, offset, signal and zipf settings must be non-negative");
  if (!(tau_sim > 0.0 && tau_sim < 1.0)) throw DataError("tau_sim must lie in (0, 1)");
  if (scenes < 0) throw DataError("scene count must be non-negative");
  if (objects_min < 2 || objects_max < objects_min) throw DataError("objects per scene must satisfy 2 <= min <= max");
  if (categories < 1) throw DataError("categories must be positive");
  if (synonym_clusters * synonym_size > predicate_count)
    throw DataError("infeasible config: synonym_clusters x synonym_size exceeds predicate_count");
}

#define RELIC_SYNTH_FIELDS(X)                                                                                  \
  X(predicate_count) X(tree_depth) X(branching) X(synonym_clusters) X(synonym_size) X(contradiction_pairs)     \
  X(embed_dim) X(embed_noise) X(child_offset) X(unseen_fraction) X(tau_sim) X(scenes) X(objects_min)           \
  X(objects_max) X(object_dim) X(categories) X(relation_rate) X(extra_relation_rate) X(signal) X(feature_noise) \
  X(zipf) X(test_fraction) X(p_keep) X(p_coarse) X(seed)

nlohmann::json synth_config_to_json(const SynthConfig& c) {
  nlohmann::json j;
#define X(name) j[#name] = c.name;
  RELIC_SYNTH_FIELDS(X)
#undef X
  return j;
}

void apply_synth_overrides(SynthConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("synth config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
#define X(name)                                    \
  if (key == #name) {                              \
    c.name = value.get<decltype(c.name)>();        \
    known = true;                                  \
  }
      RELIC_SYNTH_FIELDS(X)
#undef X
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad value for synth config key '" + key + "': " + e.what());
    }
    if (!known) throw DataError("unknown synth config key '" + key + "'");
  }
  c.validate();
}

namespace {

Vector random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  do {
    for (int k = 0; k < dim; ++k) v[k] = normal(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

// Unit vector with cosine exactly c to the unit vector a.
Vector at_cosine(std::mt19937_64& rng, const Vector& a, double c) {
  Vector w;
  do {
    w = random_unit(rng, static_cast<int>(a.size()));
    w -= w.dot(a) * a;
  } while (w.norm() < 1e-9);
  w.normalize();
  return c * a + std::sqrt(1.0 - c * c) * w;
}

Vector gaussian(std::mt19937_64& rng, int dim, double scale) {
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(dim)));
  Vector v(dim);
  for (int k = 0; k < dim; ++k) v[k] = normal(rng);
  return v;
}

struct Node {
  std::string phrase;
  int parent = -1;
  int tree = 0;
  Vector embedding;
};

}  // namespace

std::vector<int> ancestors(const SynthWorld& world, int r) {
  std::vector<int> out;
  for (int p = world.parent.at(static_cast<std::size_t>(r)); p >= 0; p = world.parent[static_cast<std::size_t>(p)])
    out.push_back(p);
  return out;
}

SynthWorld generate_world(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed ^ fnv1a64("vocabulary"));
  const int D = config.embed_dim;
  const int extras = config.synonym_clusters * (config.synonym_size - 1);
  const int budget = config.predicate_count - extras;
  if (budget < 1) throw DataError("infeasible config: no predicates left for entailment trees");

  int tree_size = 0;
  for (int l = 0, width = 1; l < config.tree_depth; ++l, width *= config.branching) tree_size += width;
  const int trees = (budget + tree_size - 1) / tree_size;
  if (config.contradiction_pairs > trees - 1)
    throw DataError("infeasible config: contradiction_pairs needs at least contradiction_pairs + 1 trees");

  // Roots first; a chain of contradiction pairs gets moderate cosines.
  std::vector<Vector> roots(static_cast<std::size_t>(trees));
  std::vector<int> order(static_cast<std::size_t>(trees));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> moderate(0.3, 0.6);
  std::vector<std::pair<int, int>> con_roots;
  for (int k = 0; k < trees; ++k) {
    const auto t = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
    if (k > 0 && k <= config.contradiction_pairs) {
      const int prev = order[static_cast<std::size_t>(k - 1)];
      roots[t] = at_cosine(rng, roots[static_cast<std::size_t>(prev)], moderate(rng));
      con_roots.emplace_back(prev, static_cast<int>(t));
    } else {
      roots[t] = random_unit(rng, D);
    }
  }

  // Trees in breadth-first order until the budget is used.
  std::vector<Node> nodes;
  std::vector<int> root_node(static_cast<std::size_t>(trees), -1);
  for (int t = 0; t < trees && static_cast<int>(nodes.size()) < budget; ++t) {
    std::vector<int> frontier{static_cast<int>(nodes.size())};
    root_node[static_cast<std::size_t>(t)] = frontier[0];
    nodes.push_back({"rel" + std::to_string(t), -1, t, roots[static_cast<std::size_t>(t)]});
    for (int level = 1; level < config.tree_depth; ++level) {
      std::vector<int> next;
      for (int p : frontier) {
        for (int c = 0; c < config.branching && static_cast<int>(nodes.size()) < budget; ++c) {
          const auto& parent = nodes[static_cast<std::size_t>(p)];
          Vector e = parent.embedding + config.child_offset * random_unit(rng, D);
          next.push_back(static_cast<int>(nodes.size()));
          nodes.push_back({parent.phrase + "." + std::to_string(c + 1), p, t, e / e.norm()});
        }
      }
      frontier = std::move(next);
    }
  }

  // Synonym clusters anchored on non-root tree nodes; extras share the anchor's parent.
  std::vector<int> non_roots;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].parent >= 0) non_roots.push_back(static_cast<int>(i));
  if (static_cast<int>(non_roots.size()) < config.synonym_clusters)
    throw DataError("infeasible config: not enough non-root predicates to anchor synonym clusters");
  std::shuffle(non_roots.begin(), non_roots.end(), rng);
  std::vector<int> anchors(non_roots.begin(), non_roots.begin() + config.synonym_clusters);
  std::sort(anchors.begin(), anchors.end());
  LatticeRules rules;
  for (int a : anchors) {
    const Vector center = nodes[static_cast<std::size_t>(a)].embedding;
    auto jitter = [&] {
      Vector e = center + gaussian(rng, D, config.embed_noise);
      return Vector(e / e.norm());
    };
    nodes[static_cast<std::size_t>(a)].embedding = jitter();
    std::vector<std::string> group{nodes[static_cast<std::size_t>(a)].phrase};
    for (int k = 1; k < config.synonym_size; ++k) {
      Node n{nodes[static_cast<std::size_t>(a)].phrase + "/s" + std::to_string(k), nodes[static_cast<std::size_t>(a)].parent,
             nodes[static_cast<std::size_t>(a)].tree, jitter()};
      group.push_back(n.phrase);
      nodes.push_back(std::move(n));
    }
    if (group.size() > 1) rules.synonym_groups.push_back(std::move(group));
  }

  SynthWorld w;
  const std::size_t P = nodes.size();
  w.parent.resize(P);
  w.tree.resize(P);
  w.fine.assign(P, true);
  w.con.resize(P);
  for (std::size_t i = 0; i < P; ++i) {
    w.parent[i] = nodes[i].parent;
    w.tree[i] = nodes[i].tree;
    if (nodes[i].parent >= 0) {
      w.fine[static_cast<std::size_t>(nodes[i].parent)] = false;
      rules.entailments.emplace_back(nodes[i].phrase, nodes[static_cast<std::size_t>(nodes[i].parent)].phrase);
    }
  }
  for (auto [ta, tb] : con_roots) {
    const int a = root_node[static_cast<std::size_t>(ta)];
    const int b = root_node[static_cast<std::size_t>(tb)];
    if (a < 0 || b < 0) continue;  // tree not materialised within the budget
    w.con[static_cast<std::size_t>(a)].push_back(b);
    w.con[static_cast<std::size_t>(b)].push_back(a);
    rules.contradictions.emplace_back(nodes[static_cast<std::size_t>(a)].phrase,
                                      nodes[static_cast<std::size_t>(b)].phrase);
  }

  for (std::size_t i = 0; i < P; ++i)
    if (w.fine[i]) w.fine_ids.push_back(static_cast<int>(i));
  std::vector<int> unseen = w.fine_ids;
  std::shuffle(unseen.begin(), unseen.end(), rng);
  unseen.resize(static_cast<std::size_t>(std::lround(config.unseen_fraction * static_cast<double>(w.fine_ids.size()))));
  const std::set<int> unseen_set(unseen.begin(), unseen.end());

  std::vector<PredicateEntry> entries;
  for (std::size_t i = 0; i < P; ++i)
    entries.push_back({nodes[i].phrase, nodes[i].embedding, unseen_set.count(static_cast<int>(i)) == 0});
  w.vocab = PredicateVocabulary(std::move(entries));
  w.rules = std::move(rules);
  w.lattice = build_lattice(w.vocab, w.rules, config.tau_sim);

  std::vector<std::size_t> rank(w.fine_ids.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  for (std::size_t i = 0; i < w.fine_ids.size(); ++i)
    w.fine_weights.push_back(std::pow(static_cast<double>(rank[i] + 1), -config.zipf));

  std::mt19937_64 world_rng(config.seed ^ fnv1a64("world"));
  for (int c = 0; c < config.categories; ++c) w.category_protos.push_back(random_unit(world_rng, config.object_dim));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(config.object_dim)));
  w.relation_map.resize(config.object_dim, D);
  for (int r = 0; r < config.object_dim; ++r)
    for (int c = 0; c < D; ++c) w.relation_map(r, c) = normal(world_rng);
  return w;
}

SynthScene generate_scene(const SynthWorld& world, const SynthConfig& config, std::size_t index,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(config.objects_min, config.objects_max);
  std::uniform_int_distribution<int> category(0, config.categories - 1);
  const int D = config.object_dim;

  SynthScene out;
  SceneInstance& s = out.scene;
  std::ostringstream id;
  id << 's' << std::setw(5) << std::setfill('0') << index;
  s.id = id.str();
  const auto train_count =
      static_cast<std::size_t>(std::lround(static_cast<double>(config.scenes) * (1.0 - config.test_fraction)));
  s.split = index < train_count ? "train" : "test";

  const int n = count(rng);
  std::vector<std::vector<bool>> interacts(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) interacts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = unit(rng) < config.relation_rate;

  // Interacting objects are placed near an earlier partner so their boxes overlap.
  for (int k = 0; k < n; ++k) {
    ObjectInstance o;
    o.id = k;
    const int cat = category(rng);
    o.category = "cat" + std::to_string(cat);
    int partner = -1;
    for (int m = 0; m < k && partner < 0; ++m)
      if (interacts[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] ||
          interacts[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)])
        partner = m;
    double cx = 0.15 + 0.7 * unit(rng);
    double cy = 0.15 + 0.7 * unit(rng);
    if (partner >= 0) {
      const Box& pb = s.objects[static_cast<std::size_t>(partner)].box;
      cx = std::clamp(pb.cx() + 0.24 * (unit(rng) - 0.5), 0.05, 0.95);
      cy = std::clamp(pb.cy() + 0.24 * (unit(rng) - 0.5), 0.05, 0.95);
    }
    const double w = 0.1 + 0.35 * unit(rng);
    const double h = 0.1 + 0.35 * unit(rng);
    o.box = {std::max(0.0, cx - 0.5 * w), std::max(0.0, cy - 0.5 * h), std::min(1.0, cx + 0.5 * w),
             std::min(1.0, cy + 0.5 * h)};
    o.feature = world.category_protos[static_cast<std::size_t>(cat)] + gaussian(rng, D, config.feature_noise);
    s.objects.push_back(std::move(o));
  }

  std::discrete_distribution<std::size_t> draw(world.fine_weights.begin(), world.fine_weights.end());
  auto closure = [&](int r) {
    std::vector<int> c{r};
    for (int a : ancestors(world, r)) c.push_back(a);
    return c;
  };
  auto conflicts = [&](const std::set<int>& held, const std::vector<int>& add) {
    for (int a : add)
      for (int b : world.con[static_cast<std::size_t>(a)])
        if (held.count(b)) return true;
    return false;
  };

  const Matrix& T = world.vocab.embedding_matrix();
  std::vector<Triplet> truth;
  std::set<Triplet> drawn_fine;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      Vector u = gaussian(rng, D, config.feature_noise);
      if (interacts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        std::set<int> held;
        std::vector<int> fines;
        const int f = world.fine_ids[draw(rng)];
        for (int r : closure(f)) held.insert(r);
        fines.push_back(f);
        if (unit(rng) < config.extra_relation_rate) {
          for (int attempt = 0; attempt < 10; ++attempt) {
            const int g = world.fine_ids[draw(rng)];
            const auto add = closure(g);
            if (held.count(g) || conflicts(held, add)) continue;
            held.insert(add.begin(), add.end());
            fines.push_back(g);
            break;
          }
        }
        Vector dir = Vector::Zero(T.cols());
        for (int f2 : fines) {
          dir += T.row(f2).transpose();
          drawn_fine.insert({i, f2, j});
        }
        u += config.signal * (world.relation_map * dir);
        for (int r : held) truth.push_back({i, r, j});
      }
      s.union_features[{i, j}] = std::move(u);
    }
  }
  std::sort(truth.begin(), truth.end());
  s.truth = truth;

  // Annotation process: independent keep, granularity collapse of kept fine
  // relations, unseen predicates never annotated.
  std::set<Triplet> annotated, collapsed;
  for (const auto& t : truth) {
    if (!(unit(rng) < config.p_keep)) continue;
    const int parent = world.parent[static_cast<std::size_t>(t.pred)];
    const bool can_collapse = drawn_fine.count(t) && parent >= 0;
    if (can_collapse && unit(rng) < config.p_coarse) {
      collapsed.insert(t);
      annotated.insert({t.subj, parent, t.obj});
      continue;
    }
    if (world.vocab[t.pred].seen) annotated.insert(t);
  }
  s.annotations = AnnotationTable({annotated.begin(), annotated.end()});
  for (const auto& t : truth) {
    if (annotated.count(t)) continue;
    out.drops.push_back({t, collapsed.count(t) ? DropKind::CollapsedToParent : DropKind::Dropped});
  }
  return out;
}

SynthDataset generate_dataset(const SynthConfig& config, int threads) {
  SynthDataset d;
  d.config = config;
  d.world = generate_world(config);
  std::vector<SynthScene> scenes(static_cast<std::size_t>(config.scenes));
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    scenes[i] = generate_scene(d.world, config, i, config.seed ^ static_cast<std::uint64_t>(i));
  });
  for (auto& sc : scenes) {
    d.drops[sc.scene.id] = std::move(sc.drops);
    d.scenes.push_back(std::move(sc.scene));
  }
  return d;
}

nlohmann::json write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& vocab = data.world.vocab;
  std::string drops;
  for (const auto& s : data.scenes) {
    auto it = data.drops.find(s.id);
    drops += drop_records_to_json(s.id, it == data.drops.end() ? std::vector<DropRecord>{} : it->second, vocab).dump();
    drops += '\n';
  }
  const std::vector<std::pair<std::string, std::string>> files{
      {"scenes.jsonl", scenes_to_jsonl(data.scenes, vocab)},
      {"vocab.json", vocabulary_to_json(vocab).dump(2) + "\n"},
      {"rules.json", rules_to_json(data.world.rules).dump(2) + "\n"},
      {"lattice.json", lattice_to_json(data.world.lattice, vocab).dump(2) + "\n"},
      {"droplog.jsonl", drops},
  };
  nlohmann::json manifest;
  manifest["format"] = "relic-synth";
  manifest["version"] = 1;
  manifest["seed"] = data.config.seed;
  manifest["config"] = synth_config_to_json(data.config);
  manifest["scene_count"] = data.scenes.size();
  manifest["files"] = nlohmann::json::array();
  for (const auto& [name, contents] : files) {
    write_file_atomic(dir / name, contents);
    manifest["files"].push_back({{"name", name}, {"sha256", sha256_hex(contents)}, {"bytes", contents.size()}});
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace relic
