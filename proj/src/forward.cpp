#include "relic/forward.hpp"

namespace relic {

void calibrate(const RelationLattice& lattice, const Propagation& prop, PairForward& pf) {
  pf.bar = propagate_scores(lattice, pf.raw, prop.sim, prop.ent);
  pf.calibrated = suppress_contradictions(lattice, pf.bar, prop.con);
}

SceneForward forward_scene(const ModelParams& params, const RelationLattice& lattice, const ProjectedText& text,
                           const SceneInstance& scene, const Propagation& prop) {
  if (static_cast<std::size_t>(text.columns.cols()) != lattice.node_count())
    throw DataError("lattice size does not match vocabulary");
  SceneForward out;
  const auto pairs = scene.ordered_pairs();
  out.pairs.reserve(pairs.size());
  for (const auto& pair : pairs) {
    PairForward pf;
    pf.feature = build_pair_feature(scene, pair.subj, pair.obj);
    pf.projection = project_pair(params, pf.feature);
    pf.raw = compatibility_scores(pf.projection, text);
    pf.candidates = propose_candidates(pf.raw, params.hyper.top_k);
    calibrate(lattice, prop, pf);
    out.pairs.push_back(std::move(pf));
  }
  return out;
}

}  // namespace relic
