#pragma once

#include "lms/core/grid.hpp"

namespace lms::core {

inline constexpr double kSimplexSumTol = 1e-9;
inline constexpr double kSimplexNegTol = 1e-12;
inline constexpr double kTieTol = 1e-12;

/// True iff every pixel has u1 + u2 = 1 (within 1e-9) and no component
/// below -1e-12.
bool validate_simplex(const SoftMask& u);

/// Per-pixel Shannon entropy -sum_i u_i ln u_i, with 0 ln 0 = 0.
ScalarGrid entropy_map(const SoftMask& u);

/// Foreground where u1 > u2; ties (|u1 - u2| <= 1e-12) go to background.
BinaryMask binarize(const SoftMask& u);

/// Dice similarity 2|A n B| / (|A| + |B|); two empty masks score 1.
double dice(const BinaryMask& pred, const BinaryMask& gt);

}  // namespace lms::core
