#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lms/app/episodes.hpp"
#include "lms/training/model.hpp"

namespace lms::app {

struct DumpSummary {
  std::vector<std::filesystem::path> files;
  int stages_dumped = 0;
  std::optional<double> dice;
};

/// Iterate dump for one episode. For k = 0..K (0 = initialization):
///   mask_k.pgm      binarized u_1^k
///   v1_k.lmt/.pgm   v_1^k raw and min-max normalized (zero at k = 0)
///   entropy_k.pgm   E(u^k) / ln 2
/// plus final_mask.pgm at image resolution and dice.txt when ground truth
/// is available.
DumpSummary segment_dump(const Episode& episode, const training::ParamStore& params,
                         const training::ModelConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace lms::app
