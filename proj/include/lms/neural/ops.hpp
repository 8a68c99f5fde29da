#pragma once

#include <vector>

#include "lms/neural/autodiff.hpp"

// Differentiable operation set. Shapes use channel-last layout: images are
// [H, W, C], single-channel grids [H, W], prototype vectors [C], banks [N, C].
namespace lms::nn::ops {

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var neg(const Var& a);
/// a * s for a one-element s.
Var mul_scalar(const Var& a, const Var& s);
/// a / s for a one-element s.
Var div_scalar(const Var& a, const Var& s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);
Var softplus(const Var& a);

// Reductions and reshaping.
Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
/// [H, W, C] -> [H, W]
Var channel(const Var& x, int c);
/// k tensors [H, W] -> [H, W, k]
Var stack_channels(const std::vector<Var>& parts);
/// n vectors [C] -> [n, C]
Var stack_rows(const std::vector<Var>& rows);
/// Bilinear upsampling of [H, W, C] by an integer factor; same taps as core::upsample_bilinear.
Var upsample_bilinear(const Var& x, int factor);

// Images.
/// 3x3 convolution with replicate padding. x [H, W, Cin], w [Cout, 3, 3, Cin],
/// b [Cout]; output [ceil(H/stride), ceil(W/stride), Cout].
Var conv3x3(const Var& x, const Var& w, const Var& b, int stride);

// Segmentation-specific.
/// Cosine fidelity -<F(x), l> / (max(|F(x)|, eps) |l|), F [H, W, C], l [C] -> [H, W].
Var cosine_rho(const Var& features, const Var& prototype, double eps);
/// alpha * (-rho_i - v_i), stacked to [H, W, 2]. v [H, W, 2].
Var dc_logits(const Var& rho1, const Var& rho2, const Var& v, double alpha);
/// Softmax over the last axis (max-subtracted).
Var softmax_last(const Var& x);
/// beta * sum_x F(x) w(x) / sum_x w(x). Throws when the mass is <= 1e-12.
Var masked_average(const Var& features, const Var& weights, double beta);
/// Mask-denoiser output layer: sigmoid(r + logit(clamp(u))) evaluated as
/// u + c(1-c) expm1(r) / (1 + c expm1(r)), c = clamp(u, eps, 1 - eps), so that
/// r == 0 reproduces u exactly.
Var sigmoid_logit_skip(const Var& residual, const Var& u, double clamp_eps);
/// -(1/N) sum_x sum_i t_i ln clamp(u_i, eps, 1 - eps); u, target [H, W, 2].
Var cross_entropy(const Var& u, const Var& target, double clamp_eps);

// Matrices.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// X [N, M] + b [M] broadcast over rows.
Var add_bias(const Var& x, const Var& b);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var slice_cols(const Var& x, int start, int len);
Var concat_cols(const std::vector<Var>& parts);
/// [N, C] -> [C]
Var mean_rows(const Var& x);
/// Attention of each row onto a single key/value l [C]: a kept row receives
/// softmax over its one score (= 1) times l, a masked row receives zero.
Var single_key_attention(const Var& p, const Var& l, const std::vector<bool>& keep);

}  // namespace lms::nn::ops
