#pragma once

#include "relic/decoder.hpp"
#include "relic/lattice.hpp"
#include "relic/scene.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace relic {

/// Top-K triplets of a decoded graph (graphs are already score-ordered).
std::vector<Triplet> top_k(const SceneGraph& graph, int k);

struct RecallResult {
  std::optional<double> value;  // absent when no scene has a reference triplet
  std::size_t scenes_used = 0;
  std::size_t scenes_excluded = 0;
};

/// Mean over scenes of |top-K ∩ annotations| / |annotations|; scenes without
/// annotations are excluded. graphs[i] belongs to scenes[i].
RecallResult recall_at_k(const std::vector<SceneGraph>& graphs, const std::vector<SceneInstance>& scenes, int k);

struct PredicateRecall {
  std::size_t hits = 0;
  std::size_t total = 0;
};

/// Reference set per scene: the complete truth when present, else annotations.
std::vector<PredicateRecall> per_predicate_recall(const std::vector<SceneGraph>& graphs,
                                                  const std::vector<SceneInstance>& scenes, std::size_t vocab_size,
                                                  int k);

/// Unweighted mean over predicates with total >= 1, optionally restricted by
/// a seen/unseen mask. Absent when no predicate qualifies.
std::optional<double> mean_of_recalls(const std::vector<PredicateRecall>& table,
                                      const std::vector<bool>* include = nullptr);

std::optional<double> harmonic_mean(std::optional<double> s, std::optional<double> u);

struct OpenVocabMetrics {
  std::optional<double> mR, S_mR, U_mR, HM;
};

OpenVocabMetrics open_vocab_metrics(const std::vector<PredicateRecall>& table, const PredicateVocabulary& vocab);

/// Fraction of drop-log triplets present in the decoded graphs. With
/// `sim_credit` a decoded Sim neighbour on the same pair also counts.
std::optional<double> fn_recall(const std::vector<SceneGraph>& graphs, const DropLog& drops,
                                const RelationLattice& lattice, bool sim_credit = false);

struct ConsistencyCounts {
  std::size_t opportunities = 0;
  std::size_t violations = 0;
  double value() const {
    return opportunities == 0 ? 1.0 : 1.0 - static_cast<double>(violations) / static_cast<double>(opportunities);
  }
};

/// Con edges with >= 1 decoded endpoint (violated when both are decoded) plus
/// Ent edges with a decoded child (violated when the parent was tracked with
/// s_hat < threshold and is not decoded). `scores[i]` belongs to graphs[i].
ConsistencyCounts lattice_consistency(const std::vector<SceneGraph>& graphs, const std::vector<SceneScores>& scores,
                                      const RelationLattice& lattice, double threshold);

/// Fraction of decoded triplets with a Sim- or Con-connected decoded triplet on the same pair.
double redundancy(const std::vector<SceneGraph>& graphs, const RelationLattice& lattice);

struct MetricsConfig {
  std::vector<int> ks{20, 50, 100};
  int primary_k = 50;
  bool fn_sim_credit = false;
  double threshold = 0.3;  // decode threshold, for Lat-Cons
};

struct KMetrics {
  int k = 0;
  RecallResult recall;
  OpenVocabMetrics open_vocab;
};

struct MetricsReport {
  std::vector<KMetrics> by_k;
  std::optional<double> fn_recall;
  double lat_cons = 1.0;
  ConsistencyCounts lat_counts;
  double redundancy = 0.0;
  std::size_t scenes = 0;
  std::size_t decoded_triplets = 0;
  std::vector<PredicateRecall> per_predicate;  // at primary_k
  int primary_k = 50;

  const KMetrics* at(int k) const;
};

MetricsReport evaluate_graphs(const std::vector<SceneGraph>& graphs, const std::vector<SceneScores>& scores,
                              const std::vector<SceneInstance>& scenes, const DropLog* drops,
                              const RelationLattice& lattice, const PredicateVocabulary& vocab,
                              const MetricsConfig& config);

nlohmann::json report_to_json(const MetricsReport& report, const PredicateVocabulary& vocab);
std::string report_to_csv(const MetricsReport& report);
std::string report_to_table(const MetricsReport& report);

}  // namespace relic
