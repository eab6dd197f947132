#pragma once

#include "relic/lattice.hpp"
#include "relic/scene.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace relic {

struct SynthConfig {
  // Vocabulary and lattice.
  int predicate_count = 200;
  int tree_depth = 3;  // levels per entailment tree (a chain of depth 3 has 2 Ent edges)
  int branching = 3;
  int synonym_clusters = 10;
  int synonym_size = 3;  // anchor plus (size - 1) extra phrases
  int contradiction_pairs = 8;
  int embed_dim = 32;
  double embed_noise = 0.25;  // sigma_emb for synonym clusters
  double child_offset = 0.75;
  double unseen_fraction = 0.0;
  double tau_sim = kDefaultSimThreshold;

  // Scenes.
  int scenes = 500;
  int objects_min = 3;
  int objects_max = 6;
  int object_dim = 32;
  int categories = 12;
  double relation_rate = 0.3;  // probability that an ordered pair interacts
  double extra_relation_rate = 0.3;
  double signal = 1.0;         // scale of the relation direction in union features
  double feature_noise = 0.3;
  double zipf = 0.5;           // exponent of the fine-predicate frequency law, 0 = uniform
  double test_fraction = 0.2;

  // Annotation process.
  double p_keep = 0.5;
  double p_coarse = 0.3;

  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& c);
/// Applies keys present in `j`; unknown keys are rejected.
void apply_synth_overrides(SynthConfig& c, const nlohmann::json& j);

/// Generated predicate structure, kept alongside the vocabulary.
struct SynthWorld {
  PredicateVocabulary vocab;
  LatticeRules rules;
  RelationLattice lattice;
  std::vector<int> parent;   // -1 for roots
  std::vector<int> tree;     // tree index, shared by synonym extras
  std::vector<bool> fine;    // no children: eligible as a drawn relation
  std::vector<std::vector<int>> con;
  std::vector<int> fine_ids;
  std::vector<double> fine_weights;  // Zipf frequencies over fine_ids
  std::vector<Vector> category_protos;
  Matrix relation_map;  // object_dim x embed_dim
};

/// Vocabulary, rules and lattice; fails on infeasible structure.
SynthWorld generate_world(const SynthConfig& config);

/// Ancestors of r in the generated tree, nearest first.
std::vector<int> ancestors(const SynthWorld& world, int r);

struct SynthScene {
  SceneInstance scene;
  std::vector<DropRecord> drops;
};

/// One scene from its own seed; `index` names it and picks the split.
SynthScene generate_scene(const SynthWorld& world, const SynthConfig& config, std::size_t index,
                          std::uint64_t seed);

struct SynthDataset {
  SynthConfig config;
  SynthWorld world;
  std::vector<SceneInstance> scenes;
  DropLog drops;
};

SynthDataset generate_dataset(const SynthConfig& config, int threads = 1);

/// Writes scenes.jsonl, vocab.json, rules.json, lattice.json, droplog.jsonl and manifest.json
/// (config echo, seed, per-file sha256). Returns the manifest.
nlohmann::json write_dataset(const SynthDataset& data, const std::filesystem::path& dir);

}  // namespace relic
