#include "lms/app/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "lms/core/metrics.hpp"

namespace lms::app {

using core::InvalidArgument;

Segmenter model_segmenter(const training::ParamStore& params, const training::ModelConfig& cfg) {
  return [&params, cfg](const Episode& ep) {
    return training::predict_mask(training::lms_forward(ep, params, cfg), ep.query_image.shape());
  };
}

Segmenter potts_segmenter(double tv_weight, const solver::SolverConfig& cfg, const solver::PottsOptions& opts) {
  return [=](const Episode& ep) {
    const core::FeatureMap fs = solver::intensity_features(ep.support_image);
    const ScalarGrid fg = ep.support_mask.as_scalar();
    ScalarGrid bg = core::make_scalar(fg.shape());
    for (std::size_t p = 0; p < fg.shape().pixels(); ++p) bg.at(p, 0) = 1.0 - fg.at(p, 0);
    const solver::PrototypePair l{solver::map_pool(fs, fg), solver::map_pool(fs, bg)};
    const solver::PottsResult r =
        solver::reference_potts_solve(solver::intensity_features(ep.query_image), l, cfg, tv_weight, opts);
    return core::binarize(r.u);
  };
}

std::vector<double> episode_dice(const std::vector<Episode>& episodes, const Segmenter& segment, int threads) {
  for (const Episode& ep : episodes)
    if (!ep.query_gt) throw InvalidArgument("evaluation: episode without query ground truth");
  std::vector<double> out(episodes.size(), 0.0);
  const auto run = [&](std::size_t i) { out[i] = core::dice(segment(episodes[i]), *episodes[i].query_gt); };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(episodes.size())));
  if (n == 1) {
    for (std::size_t i = 0; i < episodes.size(); ++i) run(i);
    return out;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (int w = 0; w < n; ++w)
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < episodes.size(); i += static_cast<std::size_t>(n))
          run(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

DscRow summarize(const std::string& name, const std::vector<Episode>& episodes, const std::vector<double>& dice,
                 const std::vector<int>& classes) {
  if (dice.size() != episodes.size()) throw InvalidArgument("evaluation: dice / episode count mismatch");
  DscRow row;
  row.name = name;
  for (int c : classes) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < episodes.size(); ++i)
      if (episodes[i].class_id == c) {
        sum += dice[i];
        ++count;
      }
    if (count == 0) throw InvalidArgument("evaluation: no episodes for class " + std::to_string(c));
    row.per_class.push_back(sum / count);
  }
  double total = 0.0;
  for (double v : row.per_class) total += v;
  row.mean = total / static_cast<double>(row.per_class.size());
  return row;
}

DscRow evaluate(const std::string& name, const std::vector<Episode>& episodes, const std::vector<int>& classes,
                const Segmenter& segment, int threads) {
  return summarize(name, episodes, episode_dice(episodes, segment, threads), classes);
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", 100.0 * v);
  return buf;
}

}  // namespace

std::string format_csv(const DscTable& table) {
  std::ostringstream os;
  os << "method";
  for (int c : table.classes) os << "," << family_name(c);
  os << ",Mean\n";
  for (const DscRow& r : table.rows) {
    os << r.name;
    for (double v : r.per_class) os << "," << percent(v);
    os << "," << percent(r.mean) << "\n";
  }
  return os.str();
}

std::string format_text(const DscTable& table) {
  std::vector<std::string> header{"Method"};
  for (int c : table.classes) header.push_back(family_name(c));
  header.push_back("Mean");
  std::vector<std::vector<std::string>> cells{header};
  for (const DscRow& r : table.rows) {
    std::vector<std::string> line{r.name};
    for (double v : r.per_class) line.push_back(percent(v));
    line.push_back(percent(r.mean));
    cells.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], line[k].size());
  std::ostringstream os;
  os << "DSC (%)\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t k = 0; k < cells[r].size(); ++k) {
      const std::string& s = cells[r][k];
      if (k == 0)
        os << s << std::string(width[k] - s.size(), ' ');
      else
        os << "  " << std::string(width[k] - s.size(), ' ') << s;
    }
    os << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t k = 0; k < width.size(); ++k) total += width[k] + (k ? 2 : 0);
      os << std::string(total, '-') << "\n";
    }
  }
  return os.str();
}

}  // namespace lms::app
