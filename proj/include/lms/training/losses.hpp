#pragma once

#include "lms/training/model.hpp"

namespace lms::training {

inline constexpr double kLossClamp = 1e-6;

/// -(1/|grid|) sum_x sum_i g_i ln clamp(u_i). gt is brought to u's
/// resolution by area average and 0.5 threshold.
Var ce_loss(const Var& u, const core::BinaryMask& gt);
double ce_loss(const core::SoftMask& u, const core::BinaryMask& gt);

/// Reverse segmentation: prototypes pooled from the query features under
/// the binarized query prediction segment the support with one DC pass,
/// scored by ce_loss against the support mask. Zero (a constant) when the
/// predicted foreground is empty.
Var par_loss(const ForwardVars& fwd, const Episode& episode, const ModelConfig& cfg);

struct LossVars {
  Var total;
  Var ce;
  Var par;
  ForwardVars forward;
};

/// ce on the final mask plus par. Throws when the episode has no query_gt.
LossVars total_loss(const ParamBinding& params, const Episode& episode, const ModelConfig& cfg);

}  // namespace lms::training
