#include "lms/training/sgd.hpp"

#include "lms/core/tensor_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace lms::training {

using core::InvalidArgument;
using core::NumericError;

void TrainConfig::validate() const {
  if (total_iterations < 1) throw InvalidArgument("train: total_iterations must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning_rate must be positive");
  if (!(decay_factor > 0.0)) throw InvalidArgument("train: decay_factor must be positive");
  if (decay_every < 1) throw InvalidArgument("train: decay_every must be positive");
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be positive");
  if (checkpoint_every < 0) throw InvalidArgument("train: checkpoint_every must be >= 0");
}

double TrainConfig::lr_at(int step) const {
  return learning_rate * std::pow(decay_factor, static_cast<double>(step / decay_every));
}

TrainResult sgd_train(const EpisodeSampler& sample, ParamStore params, const ModelConfig& model_cfg,
                      const TrainConfig& train_cfg, const TrainHooks& hooks) {
  model_cfg.validate();
  train_cfg.validate();
  if (!sample) throw InvalidArgument("sgd_train: no episode source");
  std::mt19937_64 rng(train_cfg.seed);
  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(train_cfg.total_iterations));

  for (int step = 0; step < train_cfg.total_iterations; ++step) {
    LossLogEntry entry;
    entry.step = step;
    entry.lr = train_cfg.lr_at(step);
    GradStore grad_sum;
    for (int b = 0; b < train_cfg.batch_size; ++b) {
      const Episode ep = sample(rng);
      Tape tape;
      ParamBinding bound(tape, params, true);
      LossVars loss;
      try {
        loss = total_loss(bound, ep, model_cfg);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      const double total = loss.total.value().item();
      if (!std::isfinite(total)) throw NumericError("step " + std::to_string(step) + ": non-finite loss");
      entry.ce += loss.ce.value().item();
      entry.par += loss.par.value().item();
      entry.total += total;
      try {
        tape.backward(loss.total);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      for (auto& [id, g] : bound.gradients()) {
        auto it = grad_sum.find(id);
        if (it == grad_sum.end())
          grad_sum.emplace(id, std::move(g));
        else
          nn::accumulate(it->second, g);
      }
    }
    const double inv_b = 1.0 / train_cfg.batch_size;
    entry.ce *= inv_b;
    entry.par *= inv_b;
    entry.total *= inv_b;
    for (const auto& [id, g] : grad_sum) {
      Tensor& w = params.get_mut(id);
      for (std::size_t i = 0; i < w.size(); ++i) w.data[i] -= entry.lr * (g.data[i] * inv_b);
    }
    result.log.push_back(entry);
    if (hooks.on_step) hooks.on_step(entry);
    if (train_cfg.checkpoint_every > 0 && !hooks.checkpoint_dir.empty() && (step + 1) % train_cfg.checkpoint_every == 0)
      params.save(hooks.checkpoint_dir / ("step_" + std::to_string(step + 1)));
  }
  result.params = std::move(params);
  return result;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossLogEntry>& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw core::IoError("cannot write loss log " + path.string());
  os << "step,lr,ce,par,total\n";
  char line[160];
  for (const LossLogEntry& e : log) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", e.step, e.lr, e.ce, e.par, e.total);
    os << line;
  }
}

}  // namespace lms::training
