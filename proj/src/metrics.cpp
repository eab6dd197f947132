#include "relic/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

namespace relic {

namespace {

void require_aligned(const std::vector<SceneGraph>& graphs, const std::vector<SceneInstance>& scenes) {
  if (graphs.size() != scenes.size()) throw DataError("graph and scene counts differ");
  for (std::size_t i = 0; i < graphs.size(); ++i)
    if (graphs[i].scene_id != scenes[i].id)
      throw DataError("graph '" + graphs[i].scene_id + "' does not match scene '" + scenes[i].id + "'");
}

std::vector<Triplet> reference(const SceneInstance& s) {
  if (s.truth) return *s.truth;
  return {s.annotations.triplets().begin(), s.annotations.triplets().end()};
}

using PairSets = std::map<OrderedPair, std::set<PredicateId>>;

PairSets by_pair(const SceneGraph& g) {
  PairSets out;
  for (const auto& t : g.triplets) out[{t.subj, t.obj}].insert(t.pred);
  return out;
}

}  // namespace

std::vector<Triplet> top_k(const SceneGraph& graph, int k) {
  std::vector<Triplet> out;
  const auto n = std::min(graph.triplets.size(), static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < n; ++i) out.push_back(graph.triplets[i].triplet());
  return out;
}

RecallResult recall_at_k(const std::vector<SceneGraph>& graphs, const std::vector<SceneInstance>& scenes, int k) {
  if (k < 1) throw DataError("K must be >= 1");
  require_aligned(graphs, scenes);
  RecallResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& ann = scenes[i].annotations;
    if (ann.empty()) {
      ++r.scenes_excluded;
      continue;
    }
    std::size_t hits = 0;
    for (const auto& t : top_k(graphs[i], k)) hits += ann.contains(t) ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(ann.size());
    ++r.scenes_used;
  }
  if (r.scenes_used) r.value = sum / static_cast<double>(r.scenes_used);
  return r;
}

std::vector<PredicateRecall> per_predicate_recall(const std::vector<SceneGraph>& graphs,
                                                  const std::vector<SceneInstance>& scenes, std::size_t vocab_size,
                                                  int k) {
  if (k < 1) throw DataError("K must be >= 1");
  require_aligned(graphs, scenes);
  std::vector<PredicateRecall> table(vocab_size);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto top = top_k(graphs[i], k);
    const std::set<Triplet> predicted(top.begin(), top.end());
    std::set<Triplet> ref;
    for (const auto& t : reference(scenes[i])) ref.insert(t);
    for (const auto& t : ref) {
      auto& row = table.at(static_cast<std::size_t>(t.pred));
      ++row.total;
      if (predicted.count(t)) ++row.hits;
    }
  }
  return table;
}

std::optional<double> mean_of_recalls(const std::vector<PredicateRecall>& table, const std::vector<bool>* include) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (table[r].total == 0 || (include && !(*include)[r])) continue;
    sum += static_cast<double>(table[r].hits) / static_cast<double>(table[r].total);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> harmonic_mean(std::optional<double> s, std::optional<double> u) {
  if (!s || !u) return std::nullopt;
  if (*s + *u <= 0.0) return 0.0;
  return 2.0 * *s * *u / (*s + *u);
}

OpenVocabMetrics open_vocab_metrics(const std::vector<PredicateRecall>& table, const PredicateVocabulary& vocab) {
  if (table.size() != vocab.size()) throw DataError("recall table does not match vocabulary");
  std::vector<bool> seen(vocab.size()), unseen(vocab.size());
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    seen[r] = vocab.entries()[r].seen;
    unseen[r] = !seen[r];
  }
  OpenVocabMetrics m;
  m.mR = mean_of_recalls(table);
  m.S_mR = mean_of_recalls(table, &seen);
  m.U_mR = mean_of_recalls(table, &unseen);
  m.HM = harmonic_mean(m.S_mR, m.U_mR);
  return m;
}

std::optional<double> fn_recall(const std::vector<SceneGraph>& graphs, const DropLog& drops,
                                const RelationLattice& lattice, bool sim_credit) {
  std::map<std::string, const SceneGraph*> index;
  for (const auto& g : graphs) index[g.scene_id] = &g;
  std::size_t total = 0, found = 0;
  for (const auto& [scene_id, records] : drops) {
    auto it = index.find(scene_id);
    if (it == index.end()) continue;  // scene not evaluated (other split)
    const PairSets decoded = by_pair(*it->second);
    for (const auto& rec : records) {
      ++total;
      auto p = decoded.find({rec.triplet.subj, rec.triplet.obj});
      if (p == decoded.end()) continue;
      bool hit = p->second.count(rec.triplet.pred) > 0;
      if (!hit && sim_credit)
        for (const auto& nb : lattice.sim(rec.triplet.pred)) hit = hit || p->second.count(nb.id) > 0;
      found += hit ? 1 : 0;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(found) / static_cast<double>(total);
}

ConsistencyCounts lattice_consistency(const std::vector<SceneGraph>& graphs, const std::vector<SceneScores>& scores,
                                      const RelationLattice& lattice, double threshold) {
  if (!scores.empty() && scores.size() != graphs.size()) throw DataError("score and graph counts differ");
  ConsistencyCounts c;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    std::map<OrderedPair, const std::map<PredicateId, double>*> tracked;
    if (!scores.empty())
      for (const auto& ps : scores[i].pairs) tracked[ps.pair] = &ps.s_hat;
    for (const auto& [pair, decoded] : by_pair(graphs[i])) {
      for (PredicateId r : decoded) {
        for (const auto& nb : lattice.con(r)) {
          const bool both = decoded.count(nb.id) > 0;
          if (both && nb.id < r) continue;  // counted from the lower index
          ++c.opportunities;
          if (both) ++c.violations;
        }
        for (const auto& nb : lattice.parents(r)) {
          ++c.opportunities;
          if (decoded.count(nb.id)) continue;
          auto t = tracked.find(pair);
          if (t == tracked.end()) continue;
          auto s = t->second->find(nb.id);
          if (s != t->second->end() && s->second < threshold) ++c.violations;
        }
      }
    }
  }
  return c;
}

double redundancy(const std::vector<SceneGraph>& graphs, const RelationLattice& lattice) {
  std::size_t total = 0, flagged = 0;
  for (const auto& g : graphs) {
    for (const auto& [pair, decoded] : by_pair(g)) {
      for (PredicateId r : decoded) {
        ++total;
        bool dup = false;
        for (PredicateId other : decoded)
          if (other != r && (lattice.sim_connected(r, other) || lattice.con_connected(r, other))) dup = true;
        flagged += dup ? 1 : 0;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(total);
}

const KMetrics* MetricsReport::at(int k) const {
  for (const auto& m : by_k)
    if (m.k == k) return &m;
  return nullptr;
}

MetricsReport evaluate_graphs(const std::vector<SceneGraph>& graphs, const std::vector<SceneScores>& scores,
                              const std::vector<SceneInstance>& scenes, const DropLog* drops,
                              const RelationLattice& lattice, const PredicateVocabulary& vocab,
                              const MetricsConfig& config) {
  require_aligned(graphs, scenes);
  MetricsReport rep;
  rep.primary_k = config.primary_k;
  rep.scenes = scenes.size();
  for (const auto& g : graphs) rep.decoded_triplets += g.triplets.size();
  std::vector<int> ks = config.ks;
  if (std::find(ks.begin(), ks.end(), config.primary_k) == ks.end()) ks.push_back(config.primary_k);
  std::sort(ks.begin(), ks.end());
  for (int k : ks) {
    KMetrics m;
    m.k = k;
    m.recall = recall_at_k(graphs, scenes, k);
    auto table = per_predicate_recall(graphs, scenes, vocab.size(), k);
    m.open_vocab = open_vocab_metrics(table, vocab);
    if (k == config.primary_k) rep.per_predicate = std::move(table);
    rep.by_k.push_back(std::move(m));
  }
  if (drops) rep.fn_recall = fn_recall(graphs, *drops, lattice, config.fn_sim_credit);
  rep.lat_counts = lattice_consistency(graphs, scores, lattice, config.threshold);
  rep.lat_cons = rep.lat_counts.value();
  rep.redundancy = redundancy(graphs, lattice);
  return rep;
}

namespace {

nlohmann::json opt(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string fmt(std::optional<double> v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v;
  return s.str();
}

}  // namespace

nlohmann::json report_to_json(const MetricsReport& r, const PredicateVocabulary& vocab) {
  nlohmann::json j;
  j["scenes"] = r.scenes;
  j["decoded_triplets"] = r.decoded_triplets;
  j["primary_k"] = r.primary_k;
  j["by_k"] = nlohmann::json::array();
  for (const auto& m : r.by_k)
    j["by_k"].push_back({{"k", m.k},
                         {"R", opt(m.recall.value)},
                         {"scenes_excluded", m.recall.scenes_excluded},
                         {"mR", opt(m.open_vocab.mR)},
                         {"S_mR", opt(m.open_vocab.S_mR)},
                         {"U_mR", opt(m.open_vocab.U_mR)},
                         {"HM", opt(m.open_vocab.HM)}});
  j["fn_recall"] = opt(r.fn_recall);
  j["lat_cons"] = r.lat_cons;
  j["lat_cons_opportunities"] = r.lat_counts.opportunities;
  j["lat_cons_violations"] = r.lat_counts.violations;
  j["redundancy"] = r.redundancy;
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t p = 0; p < r.per_predicate.size(); ++p) {
    const auto& row = r.per_predicate[p];
    if (row.total == 0) continue;
    per.push_back({{"predicate", vocab[static_cast<PredicateId>(p)].phrase},
                   {"seen", vocab.entries()[p].seen},
                   {"hits", row.hits},
                   {"total", row.total}});
  }
  j["per_predicate"] = std::move(per);
  return j;
}

std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(10);
  auto v = [](std::optional<double> x) {
    if (!x) return std::string();
    std::ostringstream s;
    s.precision(10);
    s << *x;
    return s.str();
  };
  out << "k,R,mR,S_mR,U_mR,HM,fn_recall,lat_cons,redundancy\n";
  for (const auto& m : r.by_k)
    out << m.k << ',' << v(m.recall.value) << ',' << v(m.open_vocab.mR) << ',' << v(m.open_vocab.S_mR) << ','
        << v(m.open_vocab.U_mR) << ',' << v(m.open_vocab.HM) << ',' << v(r.fn_recall) << ',' << r.lat_cons << ','
        << r.redundancy << '\n';
  return out.str();
}

std::string report_to_table(const MetricsReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(6) << "K" << std::right << std::setw(8) << "R@K" << std::setw(8) << "mR@K"
      << std::setw(8) << "S-mR" << std::setw(8) << "U-mR" << std::setw(8) << "HM" << '\n';
  for (const auto& m : r.by_k)
    out << std::left << std::setw(6) << m.k << std::right << std::setw(8) << fmt(m.recall.value) << std::setw(8)
        << fmt(m.open_vocab.mR) << std::setw(8) << fmt(m.open_vocab.S_mR) << std::setw(8) << fmt(m.open_vocab.U_mR)
        << std::setw(8) << fmt(m.open_vocab.HM) << '\n';
  out << "FN-Recall " << fmt(r.fn_recall) << "   Lat-Cons " << fmt(r.lat_cons) << "   Redundancy "
      << fmt(r.redundancy) << "   (" << r.scenes << " scenes, " << r.decoded_triplets << " triplets)\n";
  return out.str();
}

}  // namespace relic
