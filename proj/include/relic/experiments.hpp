#pragma once

#include "relic/learning.hpp"
#include "relic/metrics.hpp"
#include "relic/pipeline.hpp"
#include "relic/synthgen.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace relic {

/// Everything needed to train and evaluate one model on a dataset.
struct ExperimentConfig {
  Hyperparameters hyper;
  TrainConfig train;
  DecodeConfig decode;
  MetricsConfig metrics;
  int inference_iterations = 1;
  std::uint64_t init_seed = 11;
  int pair_dim = 0;   // 0: text embedding dimension
  int joint_dim = 0;  // 0: text embedding dimension
  std::string train_split = "train";
  std::string eval_split = "test";
};

/// Keys: "hyper", "train", "decode", "metrics", "model"; unknown keys are rejected.
void apply_experiment_overrides(ExperimentConfig& c, const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& c);
void apply_decode_overrides(DecodeConfig& c, const nlohmann::json& j);
void apply_metrics_overrides(MetricsConfig& c, const nlohmann::json& j);

struct Variant {
  std::string name;
  SupervisionToggles toggles;
  bool lattice_guided = true;
};

/// baseline, +SRL, +LRC, +RNE, +PUGL, full: each adds one component.
std::vector<Variant> ablation_ladder();
Variant full_variant();
Variant baseline_variant();

struct Workbench {
  const PredicateVocabulary* vocab = nullptr;
  const RelationLattice* lattice = nullptr;
  std::vector<SceneInstance> train_scenes;
  std::vector<SceneInstance> eval_scenes;
  const DropLog* drops = nullptr;
};

Workbench make_workbench(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab,
                         const RelationLattice& lattice, const DropLog* drops, const ExperimentConfig& config);

struct VariantResult {
  std::string name;
  TrainResult training;
  MetricsReport report;
};

VariantResult run_variant(const Workbench& bench, const Variant& variant, const ExperimentConfig& config);

std::vector<VariantResult> run_ablation(const Workbench& bench, const ExperimentConfig& config);

/// Full model trained and evaluated once per candidate count K.
std::vector<VariantResult> run_sweep_k(const Workbench& bench, const std::vector<int>& ks,
                                       const ExperimentConfig& config);

nlohmann::json results_to_json(const std::vector<VariantResult>& results, const PredicateVocabulary& vocab);
std::string results_to_csv(const std::vector<VariantResult>& results, int k);
std::string results_to_table(const std::vector<VariantResult>& results, int k);

}  // namespace relic
