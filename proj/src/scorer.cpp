#include "relic/scorer.hpp"

#include <algorithm>
#include <numeric>

namespace relic {

double box_iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

PairGeometry pair_geometry(const Box& subj, const Box& obj) {
  const double dcx = obj.cx() - subj.cx();
  const double dcy = obj.cy() - subj.cy();
  return {dcx,
          dcy,
          std::log(obj.width() / subj.width()),
          std::log(obj.height() / subj.height()),
          box_iou(subj, obj),
          std::hypot(dcx, dcy) / std::sqrt(2.0)};
}

PairFeature build_pair_feature(const SceneInstance& scene, ObjectId i, ObjectId j) {
  if (i == j) throw DataError("pair feature requested for an object paired with itself");
  const auto& a = scene.object(i);
  const auto& b = scene.object(j);
  PairFeature pf;
  pf.pair = {i, j};
  pf.geometry = pair_geometry(a.box, b.box);
  for (double g : pf.geometry)
    if (!std::isfinite(g)) throw DataError("non-finite pair geometry in scene '" + scene.id + "'");
  auto it = scene.union_features.find(pf.pair);
  pf.union_feature = it != scene.union_features.end() ? it->second : Vector(a.feature.cwiseMax(b.feature));
  const Eigen::Index d = a.feature.size();
  pf.input.resize(3 * d + kGeometryDim);
  pf.input << a.feature, b.feature, pf.union_feature,
      Eigen::Map<const Vector>(pf.geometry.data(), kGeometryDim);
  return pf;
}

ProjectedText project_text(const ModelParams& params, const PredicateVocabulary& vocab) {
  if (vocab.dim() != params.weights.text_proj.cols())
    throw DataError("vocabulary embedding dimension does not match text projection");
  ProjectedText t;
  t.columns = params.weights.text_proj * vocab.embedding_matrix().transpose();
  t.norms = t.columns.colwise().norm().transpose();
  for (Eigen::Index r = 0; r < t.norms.size(); ++r)
    if (!(t.norms[r] > 0.0)) throw NumericalError("projected text embedding has zero norm");
  return t;
}

PairProjection project_pair(const ModelParams& params, const PairFeature& pf) {
  if (pf.input.size() != params.weights.pair_proj.cols())
    throw DataError("pair input dimension does not match pair projection");
  PairProjection p;
  p.pair_repr = params.weights.pair_proj * pf.input;
  p.joint = params.weights.visual_proj * p.pair_repr;
  p.joint_norm = p.joint.norm();
  if (!(p.joint_norm > 0.0)) throw NumericalError("projected pair representation has zero norm");
  return p;
}

Vector compatibility_scores(const PairProjection& proj, const ProjectedText& text) {
  Vector s = (text.columns.transpose() * proj.joint).cwiseQuotient(text.norms) / proj.joint_norm;
  for (Eigen::Index r = 0; r < s.size(); ++r) s[r] = std::clamp(s[r], -1.0, 1.0);
  return s;
}

Vector compatibility_scores(const ModelParams& params, const PairFeature& pf, const PredicateVocabulary& vocab) {
  return compatibility_scores(project_pair(params, pf), project_text(params, vocab));
}

std::vector<PredicateId> propose_candidates(const Vector& scores, int k) {
  if (k < 1) throw DataError("candidate count must be >= 1");
  std::vector<PredicateId> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  const std::size_t keep = std::min(order.size(), static_cast<std::size_t>(k));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](PredicateId a, PredicateId b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(keep);
  return order;
}

}  // namespace relic
