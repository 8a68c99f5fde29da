#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lms/neural/ops.hpp"
#include "lms/neural/param_store.hpp"
#include "lms/proto/prototypes.hpp"
#include "lms/solver/primal_dual.hpp"

namespace lms::nn {

using core::FeatureMap;
using core::ScalarGrid;
using proto::ProtoBank;
using solver::PrototypePair;

// ---------------------------------------------------------------------------
// Feature extractor
// ---------------------------------------------------------------------------

/// Three 3x3 replicate-padded convolutions with strides 1, 2, 2. ReLU follows
/// the first two; the last layer is linear so features can take either sign.
struct BackboneConfig {
  int width1 = 16;
  int width2 = 32;
  int channels = 32;
};

void add_backbone_params(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng);

/// image [H, W] -> features [H/4, W/4, C]
Var feature_extract(const ParamBinding& params, const Var& image);
FeatureMap feature_extract(const ScalarGrid& image, const ParamStore& params);

// ---------------------------------------------------------------------------
// Mask denoiser
// ---------------------------------------------------------------------------

/// Output-layer variants compared in the denoiser ablation.
enum class MdVariant {
  kPlain,          ///< (a) raw CNN output, no sigmoid, no skip
  kSigmoid,        ///< (b) sigmoid(CNN(u)), no inverse-sigmoid skip
  kSigmoidLogit,   ///< (c) sigmoid(CNN(u) + logit(u)), the proposed form
};

MdVariant parse_md_variant(const std::string& s);
std::string to_string(MdVariant v);

inline constexpr double kLogitClamp = 1e-6;

/// Five conv layers (1 -> hidden -> hidden -> hidden -> hidden -> 1) stored
/// under "<prefix>.conv{1..5}.{w,b}". The last layer starts at zero.
void add_md_params(ParamStore& store, const std::string& prefix, int hidden, std::mt19937_64& rng);

/// u [H, W] -> denoised [H, W]. Layers 1-4 use ReLU.
///
/// For the proposed variant the output is sigmoid(CNN(u) + logit(c)) with
/// c = clamp(u, 1e-6, 1 - 1e-6), plus the clamp residual u - c passed
/// through the skip. A zero last layer therefore reproduces u exactly,
/// including saturated pixels outside the clamp range.
Var md_forward(const ParamBinding& params, const std::string& prefix, const Var& u, MdVariant variant);
ScalarGrid md_forward(const ScalarGrid& u, const ParamStore& params, const std::string& prefix, MdVariant variant);

/// Adapter exposing a trained mask denoiser through the solver's Denoiser
/// interface. Shares the same weights across both channels.
class MaskDenoiser final : public solver::Denoiser {
 public:
  MaskDenoiser(std::shared_ptr<const ParamStore> params, std::string prefix, MdVariant variant);
  core::DualField apply(const core::DualField& z) const override;
  std::string name() const override { return "mask_denoiser"; }

 private:
  std::shared_ptr<const ParamStore> params_;
  std::string prefix_;
  MdVariant variant_;
};

// ---------------------------------------------------------------------------
// Momentum update transformer
// ---------------------------------------------------------------------------

struct MutConfig {
  int heads = 4;
  int mlp_ratio = 4;
};

/// Per-row mask: 0 where <p_n, l1> > (min s + mean s) / 2, -inf otherwise.
std::vector<double> masking_matrix(const ProtoBank& p, std::span<const double> l1);
std::vector<double> masking_matrix(std::span<const double> rows, int count, std::span<const double> l1);

void add_mut_params(ParamStore& store, const std::string& prefix, int channels, const MutConfig& cfg,
                    std::mt19937_64& rng);

struct MutOutput {
  Var p;
  Var l1;
  Var l2;
};

/// p <- LN(attend(p -> l1) + p); p <- LN(MSA(p) + p); p <- LN(MLP(p) + p);
/// l = (GAP(p), -GAP(p)).
MutOutput mut_forward(const ParamBinding& params, const std::string& prefix, const Var& p, const Var& l1,
                      const MutConfig& cfg);
std::pair<ProtoBank, PrototypePair> mut_forward(const ProtoBank& p, std::span<const double> l1,
                                                const ParamStore& params, const std::string& prefix,
                                                const MutConfig& cfg);

// Conversions between core grids and tensors.
Tensor to_tensor(const ScalarGrid& g);
Tensor to_tensor(const FeatureMap& f);
Tensor to_tensor(const core::SoftMask& u);
Tensor to_tensor(const core::DualField& v);
Tensor to_tensor(const ProtoBank& p);
Tensor to_tensor(std::span<const double> vec);
ScalarGrid to_scalar_grid(const Tensor& t);
FeatureMap to_feature_map(const Tensor& t);
core::SoftMask to_soft_mask(const Tensor& t);
core::DualField to_dual(const Tensor& t);

}  // namespace lms::nn
