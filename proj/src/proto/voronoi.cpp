#include <limits>
#include <random>

#include "lms/proto/prototypes.hpp"

namespace lms::proto {

using core::InvalidArgument;

namespace {

struct Pixel {
  int y, x;
};

long long dist2(const Pixel& a, const Pixel& b) {
  const long long dy = a.y - b.y, dx = a.x - b.x;
  return dy * dy + dx * dx;
}

std::size_t pick(const std::vector<std::size_t>& candidates, std::mt19937_64& rng) {
  return candidates.size() == 1 ? candidates.front() : candidates[rng() % candidates.size()];
}

}  // namespace

LabelGrid voronoi_partition(const BinaryMask& mask, int n_regions, std::uint64_t rng_seed) {
  if (n_regions < 1) throw InvalidArgument("voronoi_partition: n_regions must be >= 1");
  std::vector<Pixel> fg;
  for (int y = 0; y < mask.shape().height; ++y)
    for (int x = 0; x < mask.shape().width; ++x)
      if (mask.at(y, x)) fg.push_back({y, x});
  if (fg.size() < static_cast<std::size_t>(n_regions)) throw InvalidArgument("too few pixels");

  std::mt19937_64 rng(rng_seed);

  // First seed: the foreground pixel nearest the centroid. Work in units of
  // 1/|fg| to keep the comparison exact in integers.
  long long sy = 0, sx = 0;
  for (const auto& p : fg) sy += p.y, sx += p.x;
  const long long n = static_cast<long long>(fg.size());
  std::vector<std::size_t> candidates;
  long long best = std::numeric_limits<long long>::max();
  for (std::size_t i = 0; i < fg.size(); ++i) {
    const long long dy = fg[i].y * n - sy, dx = fg[i].x * n - sx;
    const long long d = dy * dy + dx * dx;
    if (d < best) best = d, candidates.assign(1, i);
    else if (d == best) candidates.push_back(i);
  }
  std::vector<Pixel> seeds{fg[pick(candidates, rng)]};

  // Farthest-point sampling for the rest.
  std::vector<long long> nearest(fg.size());
  for (std::size_t i = 0; i < fg.size(); ++i) nearest[i] = dist2(fg[i], seeds[0]);
  while (static_cast<int>(seeds.size()) < n_regions) {
    long long far = -1;
    candidates.clear();
    for (std::size_t i = 0; i < fg.size(); ++i) {
      if (nearest[i] > far) far = nearest[i], candidates.assign(1, i);
      else if (nearest[i] == far) candidates.push_back(i);
    }
    seeds.push_back(fg[pick(candidates, rng)]);
    for (std::size_t i = 0; i < fg.size(); ++i) nearest[i] = std::min(nearest[i], dist2(fg[i], seeds.back()));
  }

  // Nearest seed wins; equal distances go to the lower seed index. Each seed
  // is at distance zero from itself, so every label is used.
  LabelGrid labels(mask.shape(), -1);
  for (const auto& p : fg) {
    int label = 0;
    long long d = dist2(p, seeds[0]);
    for (int s = 1; s < n_regions; ++s) {
      const long long ds = dist2(p, seeds[s]);
      if (ds < d) d = ds, label = s;
    }
    labels.at(mask.shape().index(p.y, p.x)) = label;
  }
  return labels;
}

}  // namespace lms::proto
