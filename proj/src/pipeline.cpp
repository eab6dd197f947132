#include "relic/pipeline.hpp"

namespace relic {

InferenceResult infer(const ModelParams& params, const RelationLattice& lattice, const PredicateVocabulary& vocab,
                      const std::vector<SceneInstance>& scenes, const InferenceConfig& config) {
  validate_params(params);
  config.decode.validate();
  if (config.posterior_iterations < 0) throw DataError("posterior iterations must be non-negative");
  std::vector<const SceneInstance*> ptrs;
  for (const auto& s : scenes) ptrs.push_back(&s);
  InferenceResult out;
  out.tables = build_posterior_tables(params, lattice, vocab, ptrs, config.toggles.propagation(params.hyper),
                                      config.toggles.completion(config.transductive), config.posterior_iterations,
                                      config.threads);
  DecodeConfig decode = config.decode;
  out.scores.resize(scenes.size());
  out.graphs.resize(scenes.size());
  parallel_for(scenes.size(), config.threads, [&](std::size_t i) {
    out.scores[i] = final_scores(out.tables[i], params.hyper.lambda_q);
    out.graphs[i] = decode_graph(out.scores[i], lattice, decode);
  });
  return out;
}

ModelDims dims_for(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab, int pair_dim,
                   int joint_dim) {
  int object_dim = 0;
  for (const auto& s : scenes) {
    if (s.objects.empty()) continue;
    if (object_dim == 0) object_dim = s.feature_dim();
    if (s.feature_dim() != object_dim) throw DataError("object feature dimension differs across scenes");
  }
  if (object_dim == 0) throw DataError("no objects to infer the feature dimension from");
  ModelDims d;
  d.object_dim = object_dim;
  d.embed_dim = vocab.dim();
  d.pair_dim = pair_dim > 0 ? pair_dim : vocab.dim();
  d.joint_dim = joint_dim > 0 ? joint_dim : vocab.dim();
  return d;
}

}  // namespace relic
