#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "lms/app/episodes.hpp"
#include "lms/training/sgd.hpp"

namespace lms::app {

struct EvalConfig {
  int episodes_per_class = 20;
  int threads = 1;
  std::uint64_t seed = 1234;
};

/// Top-level JSON: {"model": {...}, "train": {...}, "data": {...}, "eval": {...}}.
/// Every section and key is optional; unknown keys are rejected.
struct AppConfig {
  training::ModelConfig model;
  training::TrainConfig train;
  SyntheticCorpusConfig data;
  SplitSpec split;
  EvalConfig eval;

  void validate() const;
  /// Overrides every seed (model, train, data, eval).
  void apply_seed(std::uint64_t seed);
};

AppConfig parse_config(const nlohmann::json& j);
AppConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const AppConfig& cfg);

}  // namespace lms::app
