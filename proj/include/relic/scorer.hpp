#pragma once

#include "relic/lattice.hpp"
#include "relic/params.hpp"
#include "relic/scene.hpp"

#include <array>
#include <vector>

namespace relic {

/// (dcx, dcy, log w_j/w_i, log h_j/h_i, IoU, centre distance / sqrt 2)
using PairGeometry = std::array<double, kGeometryDim>;

PairGeometry pair_geometry(const Box& subj, const Box& obj);
double box_iou(const Box& a, const Box& b);

struct PairFeature {
  OrderedPair pair;
  PairGeometry geometry{};
  Vector union_feature;
  Vector input;  // [h_i, h_j, h_u, g]
};

PairFeature build_pair_feature(const SceneInstance& scene, ObjectId i, ObjectId j);

/// W_t t_r for every predicate, with norms; shared by every pair in a pass.
struct ProjectedText {
  Matrix columns;  // joint_dim x |vocab|
  Vector norms;
};

ProjectedText project_text(const ModelParams& params, const PredicateVocabulary& vocab);

/// Intermediate vectors of one pair's forward pass, kept for backprop.
struct PairProjection {
  Vector pair_repr;  // p = phi_p(input)
  Vector joint;      // u = W_p p
  double joint_norm = 0.0;
};

PairProjection project_pair(const ModelParams& params, const PairFeature& pf);

/// s_r = cos(W_p p, W_t t_r) for every predicate.
Vector compatibility_scores(const PairProjection& proj, const ProjectedText& text);
Vector compatibility_scores(const ModelParams& params, const PairFeature& pf, const PredicateVocabulary& vocab);

/// Top-K predicate indices by descending score, ties broken by ascending index.
std::vector<PredicateId> propose_candidates(const Vector& scores, int k);

}  // namespace relic
