#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lms/neural/networks.hpp"

namespace lms::training {

using nn::GradStore;
using nn::ParamBinding;
using nn::ParamStore;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using proto::Episode;
using solver::PrototypePair;

struct ModelConfig {
  int stages = 2;
  /// Fixed prototypes l = l^0 in every stage (no MAP, no MUT).
  bool flms_mode = false;
  /// When false each stage is a single DC pass with v = 0.
  bool use_pdnet = true;
  double alpha = 20.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double cosine_eps = 1e-8;
  int n_p = 12;
  nn::BackboneConfig backbone;
  int md_hidden = 32;
  nn::MdVariant md_variant = nn::MdVariant::kSigmoidLogit;
  nn::MutConfig mut;
  bool share_md = false;
  bool share_mut = false;
  /// Compute the loss at image resolution by bilinear upsampling of u
  /// instead of downsampling the ground truth.
  bool upsample_loss = false;
  std::uint64_t seed = 0;

  void validate() const;
  solver::SolverConfig solver() const;
  std::string md_prefix(int stage) const;
  std::string mut_prefix(int stage) const;
  static std::string delta_id(int stage);
};

/// Backbone, per-stage (or shared) MD and MUT weights, and one delta_raw per
/// stage initialized to softplus^-1(1).
ParamStore init_params(const ModelConfig& cfg);

struct StageVars {
  Var l1, l2;
  Var u;  ///< [h, w, 2]
  Var v;  ///< [h, w, 2]
};

struct ForwardVars {
  Var support_features;
  Var query_features;
  Var l1_init, l2_init;
  Var u_init;
  std::vector<StageVars> stages;
  Var u_final;
};

/// Differentiable unfolded pipeline on a caller-owned tape.
ForwardVars lms_forward(const ParamBinding& params, const Episode& episode, const ModelConfig& cfg);

struct StageTrace {
  PrototypePair l;
  core::SoftMask u;
  core::DualField v;
};

struct ForwardResult {
  core::SoftMask u_init;
  PrototypePair l_init;
  std::vector<StageTrace> stages;
  core::SoftMask u_final;
};

ForwardResult lms_forward(const Episode& episode, const ParamStore& params, const ModelConfig& cfg);

/// Soft mask bilinearly upsampled to image resolution, then binarized.
core::BinaryMask predict_mask(const core::SoftMask& u, core::GridShape image_shape);
core::BinaryMask predict_mask(const ForwardResult& result, core::GridShape image_shape);

/// Differentiable data-consistency layer: softmax(alpha (-rho - v)).
Var dc_layer(const Var& features, const Var& l1, const Var& l2, const Var& v, double alpha, double eps);

/// Differentiable dual step with the mask denoiser applied per channel.
Var dual_update_var(const ParamBinding& params, const Var& u, const Var& v_prev, const Var& delta,
                    const std::string& md_prefix, nn::MdVariant variant);

}  // namespace lms::training
