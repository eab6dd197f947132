#pragma once

#include "relic/lattice.hpp"
#include "relic/params.hpp"
#include "relic/scene.hpp"
#include "relic/scorer.hpp"

#include <vector>

namespace relic {

/// Propagation coefficients actually applied in a pass. Zeroed when the
/// lattice is switched off (ablation) or during scorer warmup.
struct Propagation {
  double sim = 0.0;
  double ent = 0.0;
  double con = 0.0;

  static Propagation from(const Hyperparameters& h) { return {h.lambda_sim, h.lambda_ent, h.lambda_con}; }
  static Propagation none() { return {}; }
};

struct PairForward {
  PairFeature feature;
  PairProjection projection;
  Vector raw;         // s over the full vocabulary
  Vector bar;         // after similarity/entailment propagation
  Vector calibrated;  // s_tilde, after contradiction suppression
  std::vector<PredicateId> candidates;
};

/// Scores for every ordered pair of one scene, in scene.ordered_pairs() order.
struct SceneForward {
  std::vector<PairForward> pairs;
};

/// Full forward pass. Candidates are the top-K raw scores per pair.
SceneForward forward_scene(const ModelParams& params, const RelationLattice& lattice, const ProjectedText& text,
                           const SceneInstance& scene, const Propagation& prop);

/// Calibrates one raw score vector: propagate, then suppress.
void calibrate(const RelationLattice& lattice, const Propagation& prop, PairForward& pf);

}  // namespace relic
