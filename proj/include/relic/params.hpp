#pragma once

#include "relic/common.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace relic {

inline constexpr int kGeometryDim = 6;
inline constexpr int kCategoryDim = 8;

struct ModelDims {
  int object_dim = 0;      // D_obj
  int embed_dim = 0;       // text embedding dimension
  int pair_dim = 0;        // output of the pair projection
  int joint_dim = 0;       // shared visual/text space
  int context_hidden = 16;

  int pair_input_dim() const { return 3 * object_dim + kGeometryDim; }
  int context_input_dim() const { return 2 * kCategoryDim + kGeometryDim + 2 * embed_dim; }

  bool operator==(const ModelDims&) const = default;
};

/// Trainable scalars of the posterior and negative-reliability maps.
struct EvidenceWeights {
  double alpha = 1.0;  // calibrated score
  double beta = 0.5;   // lattice consistency
  double gamma = 0.5;  // graph context
  double delta = 0.5;  // contradiction
  double eta = 1.0;    // contradiction in rho
  double mu = 1.0;     // calibrated score in rho
};

/// One-hidden-layer context scorer: g = w2 . tanh(W1 z + b1) + b2.
struct ContextWeights {
  Matrix hidden;  // H x D_ctx
  Vector hidden_bias;
  Vector out;
  double out_bias = 0.0;
};

/// Everything the optimiser updates. Gradients share this layout.
struct Trainables {
  Matrix pair_proj;    // phi_p: pair_dim x pair_input_dim
  Matrix visual_proj;  // W_p: joint_dim x pair_dim
  Matrix text_proj;    // W_t: joint_dim x embed_dim
  ContextWeights context;
  EvidenceWeights evidence;

  static Trainables zeros(const ModelDims& dims);
  std::size_t size() const;
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);
  /// this += scale * other
  void add_scaled(const Trainables& other, double scale);
  bool all_finite() const;

  /// Visits every trainable block in a fixed order. f(name, data, count).
  template <class F>
  void visit(F&& f) {
    f("pair_proj", pair_proj.data(), static_cast<std::size_t>(pair_proj.size()));
    f("visual_proj", visual_proj.data(), static_cast<std::size_t>(visual_proj.size()));
    f("text_proj", text_proj.data(), static_cast<std::size_t>(text_proj.size()));
    f("context.hidden", context.hidden.data(), static_cast<std::size_t>(context.hidden.size()));
    f("context.hidden_bias", context.hidden_bias.data(), static_cast<std::size_t>(context.hidden_bias.size()));
    f("context.out", context.out.data(), static_cast<std::size_t>(context.out.size()));
    f("context.out_bias", &context.out_bias, std::size_t{1});
    f("evidence.alpha", &evidence.alpha, std::size_t{1});
    f("evidence.beta", &evidence.beta, std::size_t{1});
    f("evidence.gamma", &evidence.gamma, std::size_t{1});
    f("evidence.delta", &evidence.delta, std::size_t{1});
    f("evidence.eta", &evidence.eta, std::size_t{1});
    f("evidence.mu", &evidence.mu, std::size_t{1});
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<Trainables*>(this)->visit([&](const char* name, double* data, std::size_t n) {
      f(name, static_cast<const double*>(data), n);
    });
  }
};

struct DensityPrior {
  double overlap = 2.0;    // weight on IoU
  double proximity = 1.0;  // weight on (1 - normalised centre distance)
  double salience = 1.0;   // weight on mean box area
  double max_relations = 3.0;
};

/// Fixed (non-trained) loss weights, propagation coefficients and decoding mix.
struct Hyperparameters {
  double lambda_sim = 0.1;
  double lambda_ent = 0.2;
  double lambda_con = 0.2;
  double lambda_u = 1.0;
  double lambda_lat = 0.1;
  double lambda_cmp = 0.01;
  double lambda_q = 0.5;
  int top_k = 15;
  DensityPrior density;
};

struct ModelParams {
  ModelDims dims;
  Trainables weights;
  Hyperparameters hyper;
};

/// Deterministic random initialisation from `seed`.
ModelParams init_params(const ModelDims& dims, const Hyperparameters& hyper, std::uint64_t seed);

void validate_params(const ModelParams& params);

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);
nlohmann::json hyper_to_json(const Hyperparameters& h);
/// Applies keys present in `j`; unknown keys are rejected.
void apply_hyper_overrides(Hyperparameters& h, const nlohmann::json& j);

}  // namespace relic
