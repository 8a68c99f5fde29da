#include "lms/app/episodes.hpp"

#include <algorithm>
#include <set>

namespace lms::app {

using core::InvalidArgument;

void SplitSpec::validate(int class_count) const {
  if (train_classes.empty() || test_classes.empty()) throw InvalidArgument("split: both class lists must be nonempty");
  std::set<int> seen;
  for (const std::vector<int>* list : {&train_classes, &test_classes})
    for (int c : *list) {
      if (c < 0 || c >= class_count)
        throw InvalidArgument("split: class " + std::to_string(c) + " not in corpus of " +
                              std::to_string(class_count));
      if (!seen.insert(c).second) throw InvalidArgument("split: class " + std::to_string(c) + " listed twice");
    }
}

Episode make_episode(const Corpus& corpus, int class_id, int support, int query) {
  if (class_id < 0 || class_id >= corpus.class_count()) throw InvalidArgument("episode: unknown class");
  const auto& pool = corpus.instances[class_id];
  if (pool.size() < 2) throw InvalidArgument("episode: class " + std::to_string(class_id) + " has < 2 instances");
  if (support == query) throw InvalidArgument("episode: support and query must differ");
  const Instance& s = pool.at(static_cast<std::size_t>(support));
  const Instance& q = pool.at(static_cast<std::size_t>(query));
  Episode ep;
  ep.support_image = s.image;
  ep.support_mask = s.mask;
  ep.query_image = q.image;
  ep.query_gt = q.mask;
  ep.class_id = class_id;
  return ep;
}

namespace {

Episode draw_pair(const Corpus& corpus, int class_id, std::mt19937_64& rng) {
  const auto n = corpus.instances.at(static_cast<std::size_t>(class_id)).size();
  if (n < 2) throw InvalidArgument("episode: class " + std::to_string(class_id) + " has < 2 instances");
  const auto s = static_cast<int>(rng() % n);
  auto q = static_cast<int>(rng() % (n - 1));
  if (q >= s) ++q;
  return make_episode(corpus, class_id, s, q);
}

}  // namespace

Episode sample_episode(const Corpus& corpus, const SplitSpec& split, Phase phase, std::mt19937_64& rng) {
  const std::vector<int>& classes = split.classes(phase);
  if (classes.empty()) throw InvalidArgument("episode: no classes for this phase");
  return draw_pair(corpus, classes[rng() % classes.size()], rng);
}

std::vector<Episode> test_episodes(const Corpus& corpus, const SplitSpec& split, int episodes_per_class,
                                   std::uint64_t seed) {
  if (episodes_per_class < 1) throw InvalidArgument("evaluation: episodes_per_class must be positive");
  split.validate(corpus.class_count());
  std::mt19937_64 rng(seed);
  std::vector<Episode> out;
  for (int c : split.test_classes)
    for (int e = 0; e < episodes_per_class; ++e) out.push_back(draw_pair(corpus, c, rng));
  return out;
}

}  // namespace lms::app
