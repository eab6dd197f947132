#pragma once

#include "relic/completion.hpp"
#include "relic/lattice.hpp"
#include "relic/scene.hpp"

#include "json.hpp"

#include <map>
#include <string>
#include <vector>

namespace relic {

/// Final scores of the tracked predicates of one pair, by predicate index.
struct PairScores {
  OrderedPair pair;
  std::map<PredicateId, double> s_hat;
};

struct SceneScores {
  std::string scene_id;
  std::vector<PairScores> pairs;
};

/// s_hat = s_tilde + lambda_q * q
double final_score(double s_tilde, double q, double lambda_q);
SceneScores final_scores(const PosteriorTable& table, double lambda_q);

struct DecodeConfig {
  double threshold = 0.3;
  int per_pair_cap = 5;
  bool keep_parent = true;
  /// Off: threshold + cap only (no contradiction or redundancy pruning).
  bool lattice_guided = true;

  void validate() const;
};

struct ScoredTriplet {
  ObjectId subj = 0;
  PredicateId pred = 0;
  ObjectId obj = 0;
  double score = 0.0;

  Triplet triplet() const { return {subj, pred, obj}; }
};

struct SceneGraph {
  std::string scene_id;
  std::vector<ScoredTriplet> triplets;  // descending score, then (subj, obj, pred)
};

/// Decodes one pair. Returned predicates are sorted by descending score,
/// ties by ascending index.
std::vector<PredicateId> decode_pair(const std::map<PredicateId, double>& scores, const RelationLattice& lattice,
                                     const DecodeConfig& config);

SceneGraph decode_graph(const SceneScores& scores, const RelationLattice& lattice, const DecodeConfig& config);

/// Restricts a score table to the decoded triplets (for idempotence checks).
SceneScores restrict_to_graph(const SceneScores& scores, const SceneGraph& graph);

nlohmann::json graph_to_json(const SceneGraph& graph, const PredicateVocabulary& vocab);
SceneGraph graph_from_json(const nlohmann::json& j, const PredicateVocabulary& vocab);
std::string render_graph(const SceneGraph& graph, const PredicateVocabulary& vocab, const SceneInstance* scene);

/// Score tables as stored in posterior-table exports (uses the "s_hat" field).
SceneScores scores_from_posterior_json(const nlohmann::json& j, const PredicateVocabulary& vocab);

}  // namespace relic
