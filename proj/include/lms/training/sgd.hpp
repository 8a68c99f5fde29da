#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "lms/training/losses.hpp"

namespace lms::training {

struct TrainConfig {
  int total_iterations = 2000;
  double learning_rate = 1e-3;
  double decay_factor = 0.98;
  int decay_every = 1000;
  int batch_size = 1;
  /// 0 disables checkpoints.
  int checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
  double lr_at(int step) const;
};

struct LossLogEntry {
  int step = 0;
  double lr = 0.0;
  double ce = 0.0;
  double par = 0.0;
  double total = 0.0;
};

using EpisodeSampler = std::function<Episode(std::mt19937_64&)>;

struct TrainResult {
  ParamStore params;
  std::vector<LossLogEntry> log;
};

struct TrainHooks {
  /// Checkpoints go to <dir>/step_<n>; empty disables them.
  std::filesystem::path checkpoint_dir;
  std::function<void(const LossLogEntry&)> on_step;
};

/// Plain SGD, one sampled episode per step (batch gradients averaged).
/// Throws NumericError naming the step when the loss is not finite.
TrainResult sgd_train(const EpisodeSampler& sample, ParamStore params, const ModelConfig& model_cfg,
                      const TrainConfig& train_cfg, const TrainHooks& hooks = {});

void write_loss_log(const std::filesystem::path& path, const std::vector<LossLogEntry>& log);

}  // namespace lms::training
