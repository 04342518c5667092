#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "spkbal/evaluation.hpp"
#include "spkbal/synthgen.hpp"
#include "spkbal/train.hpp"

namespace spkbal {

/// Strategy names accepted by a plan, in report order.
inline const std::vector<std::string> kAllStrategies = {"SD", "UN", "MU", "OV", "E1", "E2", "E3", "EN"};

struct ExperimentPlan {
  /// Corpus source: generated from `generator` unless `corpus_path` is set.
  GeneratorConfig generator;
  std::filesystem::path corpus_path;

  std::vector<std::string> strategies = {"SD", "MU", "E1", "E2", "E3", "EN"};
  int width_divisor = 16;
  int feedback_embed_dim = 4;
  TrainingConfig training;
  std::size_t bootstrap_draws = 300;
  std::uint64_t seed = 1;
  std::vector<std::pair<std::string, std::string>> ab_pairs = {{"MU", "SD"}, {"EN", "SD"}, {"EN", "MU"}};
  double judge_noise = 0.5;

  std::filesystem::path out = "run";
  int workers = 1;

  void validate() const;
  bool has(std::string_view strategy) const;
  /// Hash of everything that determines the artifact tree (excludes `out` and `workers`).
  std::uint64_t config_hash() const;
};

void to_json(nlohmann::json& j, const ExperimentPlan& p);
void from_json(const nlohmann::json& j, ExperimentPlan& p);

/// Recipe used for a plan strategy. SD needs the speaker id.
TrainingSetRecipe plan_recipe(const ExperimentPlan& plan, std::string_view strategy,
                              std::string_view speaker = {});

struct RunResult {
  MetricReport report;
  std::vector<PreferenceTally> preferences;
  nlohmann::json manifest;
  /// Per-frame spectral error of EN never exceeds the E1..E3 mean (checked when EN runs).
  std::optional<bool> ensemble_contraction;
};

/// Trains, synthesizes, combines and evaluates every strategy of the plan and
/// writes the artifact tree under plan.out. Completed models recorded in
/// state.json are reused when the plan is unchanged.
RunResult run(const ExperimentPlan& plan);

/// Largest per-frame violation of ||mean_i p_i - r|| <= mean_i ||p_i - r|| over the
/// scored spectral dimensions; <= 0 when contraction holds.
double contraction_violation(const std::vector<AcousticSequence>& subsystems,
                             const AcousticSequence& combined, const AcousticSequence& reference);

}  // namespace spkbal
