#pragma once

#include "relic/completion.hpp"
#include "relic/decoder.hpp"
#include "relic/learning.hpp"
#include "relic/params.hpp"
#include "relic/scene.hpp"

#include <vector>

namespace relic {

struct InferenceConfig {
  DecodeConfig decode;
  int posterior_iterations = 1;
  /// Clamp annotated entries of the evaluated scenes to q = 1.
  bool transductive = false;
  SupervisionToggles toggles;
  int threads = 1;
};

struct InferenceResult {
  std::vector<PosteriorTable> tables;
  std::vector<SceneScores> scores;
  std::vector<SceneGraph> graphs;
};

/// Scores, posterior tables and decoded graphs for every scene, in order.
InferenceResult infer(const ModelParams& params, const RelationLattice& lattice, const PredicateVocabulary& vocab,
                      const std::vector<SceneInstance>& scenes, const InferenceConfig& config);

/// Model dimensions implied by the data: phi_p maps into the text
/// embedding dimension and the joint space defaults to it as well.
ModelDims dims_for(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab, int pair_dim = 0,
                   int joint_dim = 0);

}  // namespace relic
