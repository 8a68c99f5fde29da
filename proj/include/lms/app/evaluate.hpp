#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lms/app/episodes.hpp"
#include "lms/solver/potts.hpp"
#include "lms/training/model.hpp"

namespace lms::app {

/// Maps an episode to a predicted query mask at image resolution.
using Segmenter = std::function<BinaryMask(const Episode&)>;

Segmenter model_segmenter(const training::ParamStore& params, const training::ModelConfig& cfg);

/// Classical baseline: (I, 1 - I) features, prototypes pooled from the
/// support foreground and background, reference_potts_solve on the query.
Segmenter potts_segmenter(double tv_weight, const solver::SolverConfig& cfg = {},
                          const solver::PottsOptions& opts = {});

/// Dice per episode, in episode order. Episodes are split across threads;
/// results do not depend on the thread count.
std::vector<double> episode_dice(const std::vector<Episode>& episodes, const Segmenter& segment, int threads = 1);

struct DscRow {
  std::string name;
  std::vector<double> per_class;
  double mean = 0.0;
};

struct DscTable {
  std::vector<int> classes;
  std::vector<DscRow> rows;
};

/// Per-class mean Dice over the episodes of each class, plus the mean over
/// classes. Dice values are stored as fractions; tables print percentages.
DscRow summarize(const std::string& name, const std::vector<Episode>& episodes, const std::vector<double>& dice,
                 const std::vector<int>& classes);

DscRow evaluate(const std::string& name, const std::vector<Episode>& episodes, const std::vector<int>& classes,
                const Segmenter& segment, int threads = 1);

/// Header "method,<class names...>,Mean"; values in percent with 4 decimals.
std::string format_csv(const DscTable& table);
std::string format_text(const DscTable& table);

}  // namespace lms::app
