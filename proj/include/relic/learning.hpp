#pragma once

#include "relic/completion.hpp"
#include "relic/forward.hpp"
#include "relic/lattice.hpp"
#include "relic/params.hpp"
#include "relic/scene.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace relic {

struct LossBreakdown {
  double R_p_plus = 0.0;
  double R_u = 0.0;
  double L_PU = 0.0;
  double L_lat = 0.0;
  double L_cmp = 0.0;
  double L_total = 0.0;
  // Weights the totals were assembled with (warmup uses 1, 0, 0).
  double lambda_u = 0.0;
  double lambda_lat = 0.0;
  double lambda_cmp = 0.0;
  std::size_t positives = 0;
  std::size_t unlabeled = 0;
  bool empty_positive = false;
};

/// Mean of -log sigmoid(s) over the given calibrated scores; 0 when empty.
double positive_risk(const std::vector<double>& s_tilde);

struct UnlabeledTerm {
  double s_tilde = 0.0;
  double q = 0.0;
  double rho = 0.0;
};

/// Mean of q (-log sigmoid s) + rho (-log(1 - sigmoid s)); 0 when empty.
double unlabeled_risk(const std::vector<UnlabeledTerm>& terms);

/// Lattice loss of one pair given q for every predicate (untracked = 0).
/// Con products are counted once per unordered pair.
double pair_lattice_loss(const RelationLattice& lattice, const std::vector<double>& q);

/// |sum_{r in C} q_r - rho_den|
double pair_compactness_loss(double candidate_q_sum, double rho_den);

/// Fills L_PU and L_total from the components and weights.
LossBreakdown total_loss(double R_p_plus, double R_u, double L_lat, double L_cmp, double lambda_u, double lambda_lat,
                         double lambda_cmp);

/// How q enters the losses.
///  Frozen:    every q is a constant; L_lat / L_cmp carry no gradient.
///  Recompute: R_u uses frozen q, rho; L_lat / L_cmp use
///             q = sigmoid(alpha s_tilde + beta c + gamma g - delta n) with c, n
///             and the context summary frozen, so gradients reach s_tilde, g and
///             alpha..delta.
///  Live:      as Recompute, and R_u also differentiates through q and rho.
enum class QGradientMode { Frozen, Recompute, Live };

const char* to_string(QGradientMode mode);
QGradientMode q_gradient_mode_from_string(const std::string& s);

/// Which supervision components are active. The ablation ladder toggles these.
struct SupervisionToggles {
  bool lattice_reasoning = true;   // SRL: propagation coefficients
  bool latent_completion = true;   // LRC: q for unannotated entries
  bool reliable_negatives = true;  // RNE: rho from evidence, else 1 - q
  bool pu_learning = true;         // PUGL: q-weighted positive term in R_u

  CompletionOptions completion(bool use_annotations) const {
    return {use_annotations, latent_completion, reliable_negatives};
  }
  Propagation propagation(const Hyperparameters& h) const {
    return lattice_reasoning ? Propagation::from(h) : Propagation::none();
  }
};

struct ObjectiveOptions {
  Propagation prop;
  SupervisionToggles toggles;
  QGradientMode q_gradient = QGradientMode::Recompute;
  /// Stage-1 objective: R_p+ plus softplus(s) over background entries,
  /// no lattice or compactness terms.
  bool warmup = false;
};

struct Objective {
  LossBreakdown loss;
  std::optional<Trainables> grad;
};

/// Batch objective over scenes with their frozen posterior tables. Candidate
/// sets, c, n and context summaries come from the tables; raw and calibrated
/// scores are recomputed from `params`. Gradients are reduced in scene order.
Objective evaluate_objective(const ModelParams& params, const RelationLattice& lattice,
                             const PredicateVocabulary& vocab, const std::vector<const SceneInstance*>& scenes,
                             const std::vector<const PosteriorTable*>& tables, const ObjectiveOptions& opts,
                             bool with_grad, int threads = 1);

struct TrainConfig {
  int warmup_steps = 40;
  int joint_steps = 600;
  double learning_rate = 0.5;
  int batch_size = 12;
  std::uint64_t seed = 7;
  int posterior_iterations = 1;
  int threads = 1;
  QGradientMode q_gradient = QGradientMode::Recompute;
  SupervisionToggles toggles;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Applies keys present in `j`; unknown keys are rejected.
void apply_train_overrides(TrainConfig& c, const nlohmann::json& j);

struct StepRecord {
  int step = 0;
  std::string stage;  // "warmup" or "joint"
  LossBreakdown loss;
};

/// Called after every optimisation step with the tables the loss used.
using StepObserver = std::function<void(const StepRecord&, const std::vector<const PosteriorTable*>&)>;

struct TrainResult {
  ModelParams params;
  std::vector<StepRecord> log;
  bool diverged = false;
  std::string message;
};

/// Three stages: scorer warmup on raw scores, posterior-table initialisation,
/// then the joint loop (forward, calibrate, refresh q / rho, loss, SGD step).
TrainResult train(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab,
                  const RelationLattice& lattice, const ModelParams& init, const TrainConfig& config,
                  const StepObserver& observer = {});

std::string training_log_csv(const std::vector<StepRecord>& log);

struct GradientCheckEntry {
  std::string block;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientCheckReport {
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  /// Largest |numeric| among coordinates whose analytic gradient is exactly 0.
  double max_abs_error_zero_grad = 0.0;
  std::vector<GradientCheckEntry> entries;
};

/// Central differences of L_total with q, rho and candidate sets frozen.
/// `coordinates` = 0 checks every coordinate; otherwise a seeded sample.
GradientCheckReport check_gradients(const ModelParams& params, const RelationLattice& lattice,
                                    const PredicateVocabulary& vocab, const std::vector<const SceneInstance*>& scenes,
                                    const std::vector<const PosteriorTable*>& tables, const ObjectiveOptions& opts,
                                    double eps = 1e-5, std::size_t coordinates = 0, std::uint64_t seed = 1);

/// Tables for `scenes` after init + `iterations` refreshes under `params`.
std::vector<PosteriorTable> build_posterior_tables(const ModelParams& params, const RelationLattice& lattice,
                                                   const PredicateVocabulary& vocab,
                                                   const std::vector<const SceneInstance*>& scenes,
                                                   const Propagation& prop, const CompletionOptions& copts,
                                                   int iterations, int threads = 1);

}  // namespace relic
