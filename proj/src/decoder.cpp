#include "relic/decoder.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

namespace relic {

double final_score(double s_tilde, double q, double lambda_q) { return s_tilde + lambda_q * q; }

SceneScores final_scores(const PosteriorTable& table, double lambda_q) {
  if (lambda_q < 0.0) throw DataError("lambda_q must be non-negative");
  SceneScores out;
  out.scene_id = table.scene_id;
  out.pairs.reserve(table.pairs.size());
  for (const auto& pp : table.pairs) {
    PairScores ps;
    ps.pair = pp.pair;
    for (const auto& e : pp.entries) ps.s_hat[e.predicate] = final_score(e.s_tilde, e.q, lambda_q);
    out.pairs.push_back(std::move(ps));
  }
  return out;
}

void DecodeConfig::validate() const {
  if (!std::isfinite(threshold)) throw DataError("decode threshold must be finite");
  if (per_pair_cap < 1) throw DataError("per-pair cap must be >= 1");
}

std::vector<PredicateId> decode_pair(const std::map<PredicateId, double>& scores, const RelationLattice& lattice,
                                     const DecodeConfig& config) {
  std::vector<std::pair<PredicateId, double>> ranked(scores.begin(), scores.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto cap = static_cast<std::size_t>(config.per_pair_cap);

  auto by_rank = [](std::vector<std::pair<PredicateId, double>> v) {
    std::vector<PredicateId> ids;
    for (const auto& [id, s] : v) ids.push_back(id);
    return ids;
  };

  if (!config.lattice_guided) {
    std::vector<std::pair<PredicateId, double>> kept;
    for (const auto& entry : ranked)
      if (entry.second >= config.threshold && kept.size() < cap) kept.push_back(entry);
    return by_rank(kept);
  }

  // Both conflict passes run over every tracked predicate in rank order, so
  // each decision depends only on higher-ranked entries and never on the
  // threshold. Thresholding and the cap then cut a prefix of the survivors,
  // which keeps decoding monotone in the threshold and idempotent.
  std::vector<std::pair<PredicateId, double>> con_free;
  for (const auto& entry : ranked) {
    bool drop = false;
    for (const auto& [k, sk] : con_free)
      if (lattice.con_connected(entry.first, k)) {
        drop = true;
        break;
      }
    if (!drop) con_free.push_back(entry);
  }
  std::vector<std::pair<PredicateId, double>> survivors;
  for (const auto& entry : con_free) {
    const PredicateId r = entry.first;
    bool drop = false;
    // A Sim neighbour ranked above r removes r unless r is strictly more specific.
    for (const auto& [k, sk] : survivors)
      if (lattice.sim_connected(r, k) && lattice.ent_depth(k) >= lattice.ent_depth(r)) {
        drop = true;
        break;
      }
    if (!drop) survivors.push_back(entry);
  }

  std::vector<std::pair<PredicateId, double>> kept;
  for (const auto& entry : survivors)
    if (entry.second >= config.threshold && kept.size() < cap) kept.push_back(entry);

  // Parents come from the Con-free pool, so a parent removed as a Sim
  // duplicate can return next to its synonym.
  if (config.keep_parent) {
    std::set<PredicateId> present;
    for (const auto& [id, s] : kept) present.insert(id);
    std::set<PredicateId> parents;
    for (const auto& [id, s] : kept)
      for (const auto& nb : lattice.parents(id)) parents.insert(nb.id);
    std::vector<std::pair<PredicateId, double>> extra;
    for (const auto& entry : con_free)
      if (parents.count(entry.first) && !present.count(entry.first) && entry.second >= 0.5 * config.threshold)
        extra.push_back(entry);
    kept.insert(kept.end(), extra.begin(), extra.end());
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }
  return by_rank(kept);
}

SceneGraph decode_graph(const SceneScores& scores, const RelationLattice& lattice, const DecodeConfig& config) {
  config.validate();
  SceneGraph g;
  g.scene_id = scores.scene_id;
  for (const auto& ps : scores.pairs) {
    for (PredicateId r : decode_pair(ps.s_hat, lattice, config))
      g.triplets.push_back({ps.pair.subj, r, ps.pair.obj, ps.s_hat.at(r)});
  }
  std::stable_sort(g.triplets.begin(), g.triplets.end(), [](const ScoredTriplet& a, const ScoredTriplet& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.subj, a.obj, a.pred) < std::tie(b.subj, b.obj, b.pred);
  });
  return g;
}

SceneScores restrict_to_graph(const SceneScores& scores, const SceneGraph& graph) {
  std::set<Triplet> keep;
  for (const auto& t : graph.triplets) keep.insert(t.triplet());
  SceneScores out;
  out.scene_id = scores.scene_id;
  for (const auto& ps : scores.pairs) {
    PairScores r;
    r.pair = ps.pair;
    for (const auto& [id, s] : ps.s_hat)
      if (keep.count({ps.pair.subj, id, ps.pair.obj})) r.s_hat[id] = s;
    out.pairs.push_back(std::move(r));
  }
  return out;
}

nlohmann::json graph_to_json(const SceneGraph& graph, const PredicateVocabulary& vocab) {
  nlohmann::json triplets = nlohmann::json::array();
  for (const auto& t : graph.triplets)
    triplets.push_back({{"subj", t.subj}, {"pred", vocab[t.pred].phrase}, {"obj", t.obj}, {"score", t.score}});
  return {{"scene_id", graph.scene_id}, {"triplets", std::move(triplets)}};
}

SceneGraph graph_from_json(const nlohmann::json& j, const PredicateVocabulary& vocab) {
  try {
    SceneGraph g;
    g.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& t : j.at("triplets")) {
      ScoredTriplet st;
      st.subj = t.at("subj").get<ObjectId>();
      st.pred = vocab.require(t.at("pred").get<std::string>());
      st.obj = t.at("obj").get<ObjectId>();
      st.score = t.at("score").get<double>();
      g.triplets.push_back(st);
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed scene graph: ") + e.what());
  }
}

std::string render_graph(const SceneGraph& graph, const PredicateVocabulary& vocab, const SceneInstance* scene) {
  auto name = [&](ObjectId id) {
    if (scene && scene->has_object(id)) return scene->object(id).category + "#" + std::to_string(id);
    return "#" + std::to_string(id);
  };
  std::ostringstream out;
  out << "scene " << graph.scene_id << " (" << graph.triplets.size() << " triplets)\n";
  for (const auto& t : graph.triplets)
    out << "  " << std::fixed << std::setprecision(4) << t.score << "  " << name(t.subj) << " --" << vocab[t.pred].phrase
        << "--> " << name(t.obj) << '\n';
  return out.str();
}

SceneScores scores_from_posterior_json(const nlohmann::json& j, const PredicateVocabulary& vocab) {
  try {
    SceneScores s;
    s.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& p : j.at("pairs")) {
      PairScores ps;
      ps.pair = {p.at("subj").get<ObjectId>(), p.at("obj").get<ObjectId>()};
      for (const auto& e : p.at("entries"))
        ps.s_hat[vocab.require(e.at("predicate").get<std::string>())] = e.at("s_hat").get<double>();
      s.pairs.push_back(std::move(ps));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed posterior table: ") + e.what());
  }
}

}  // namespace relic
