#pragma once

#include <random>
#include <vector>

#include "lms/app/synthetic.hpp"
#include "lms/proto/prototypes.hpp"

namespace lms::app {

using proto::Episode;

enum class Phase { kTrain, kTest };

struct SplitSpec {
  std::vector<int> train_classes{0, 1, 2, 3};
  std::vector<int> test_classes{4, 5};

  /// Disjoint, nonempty, and every id below class_count.
  void validate(int class_count) const;
  const std::vector<int>& classes(Phase phase) const { return phase == Phase::kTrain ? train_classes : test_classes; }
};

/// Support and query are two distinct instances of the same class.
Episode make_episode(const Corpus& corpus, int class_id, int support, int query);

/// Uniform class from the phase's list, then two distinct instances.
Episode sample_episode(const Corpus& corpus, const SplitSpec& split, Phase phase, std::mt19937_64& rng);

/// A fixed evaluation set: episodes_per_class episodes for every test class,
/// grouped by class in test_classes order.
std::vector<Episode> test_episodes(const Corpus& corpus, const SplitSpec& split, int episodes_per_class,
                                   std::uint64_t seed);

}  // namespace lms::app
