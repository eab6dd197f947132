#pragma once

#include "relic/forward.hpp"
#include "relic/lattice.hpp"
#include "relic/params.hpp"
#include "relic/scene.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace relic {

struct PosteriorEntry {
  PredicateId predicate = 0;
  bool annotated = false;
  bool candidate = false;
  /// Unannotated candidate with a Con edge to an annotated predicate of the
  /// same pair; the warmup stage uses these as reliable background negatives.
  bool background = false;
  double s = 0.0;
  double s_tilde = 0.0;
  double q = 0.0;
  double rho = 0.0;
  double c = 0.0;
  double n = 0.0;
  double g = 0.0;
};

struct PairPosterior {
  OrderedPair pair;
  std::vector<PredicateId> candidates;  // by descending raw score
  std::vector<PosteriorEntry> entries;  // candidates and annotated predicates, by predicate index
  /// Frozen context summary without the relation embedding:
  /// [category(subj), category(obj), geometry, q-weighted context mean].
  Vector context;
  double density_prior = 0.0;

  const PosteriorEntry* find(PredicateId r) const;
  /// q of a tracked predicate, 0 for untracked ones.
  double q_of(PredicateId r) const;
};

/// Per-scene table indexed like scene.ordered_pairs().
struct PosteriorTable {
  std::string scene_id;
  std::vector<PairPosterior> pairs;
};

struct CompletionOptions {
  bool use_annotations = true;    // clamp y = 1 entries to q = 1 (training / transductive use)
  bool latent_completion = true;  // off: q = 0 for unannotated entries
  bool reliable_negatives = true; // off: rho = 1 - q
};

/// Unit-norm hashed embedding of a category string (kCategoryDim).
Vector category_embedding(const std::string& category);

double consistency_term(const RelationLattice& lattice, const PairPosterior& prev, PredicateId r);
double contradiction_term(const RelationLattice& lattice, const PairPosterior& prev, PredicateId r);

/// rho = (1 - q) * sigmoid(eta * n - mu * s_tilde)
double negative_reliability(double q, double n, double s_tilde, double eta, double mu);

/// Context summary for pair `index`, from the frozen previous table.
Vector context_summary(const SceneInstance& scene, const PairFeature& feature, const PosteriorTable& prev,
                       std::size_t index, const PredicateVocabulary& vocab);

struct ContextActivation {
  Vector hidden;  // tanh activations
  double pre_clamp = 0.0;
  double g = 0.0;
};

inline constexpr double kContextClamp = 5.0;

/// phi_g on [context; t_r], clamped to [-kContextClamp, kContextClamp].
ContextActivation evaluate_context(const ContextWeights& w, const Vector& context, const Vector& relation_embedding);

double graph_context_term(const ModelParams& params, const Vector& context, const Vector& relation_embedding);

/// ρ_den = R_max * sigmoid(a IoU + b (1 - dist) + c salience)
double density_prior(const DensityPrior& prior, const Box& subj, const Box& obj);

/// Stage-2 table: q = sigmoid(alpha s_tilde) for unannotated entries, 1 for annotated.
PosteriorTable init_posteriors(const ModelParams& params, const RelationLattice& lattice, const SceneInstance& scene,
                               const SceneForward& forward, const CompletionOptions& opts);

/// One synchronous refresh: c, n and the context summary come from `prev`,
/// s_tilde and g from the current parameters; annotated entries stay at q = 1.
PosteriorTable update_posteriors(const ModelParams& params, const RelationLattice& lattice,
                                 const PredicateVocabulary& vocab, const SceneInstance& scene,
                                 const SceneForward& forward, const PosteriorTable& prev,
                                 const CompletionOptions& opts);

/// Checks q in [0,1], rho in [0, 1-q+1e-9], annotated => q = 1, finiteness.
std::vector<std::string> check_posterior_invariants(const PosteriorTable& table);

nlohmann::json posterior_table_to_json(const PosteriorTable& table, const PredicateVocabulary& vocab,
                                       double lambda_q);

}  // namespace relic
