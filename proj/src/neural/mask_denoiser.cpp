#include <cmath>

#include "lms/neural/networks.hpp"

namespace lms::nn {

using core::InvalidArgument;

namespace {

double he_std(int fan_in_channels) { return std::sqrt(2.0 / (9.0 * fan_in_channels)); }

}  // namespace

void add_md_params(ParamStore& store, const std::string& prefix, int hidden, std::mt19937_64& rng) {
  const auto conv = [&](const std::string& name, int in, int out) {
    store.add(name + ".w", normal_tensor({out, 3, 3, in}, he_std(in), rng), "conv_weight");
    store.add(name + ".b", Tensor({out}, 0.0), "conv_bias");
  };
  conv(prefix + ".conv1", 1, hidden);
  for (int k = 2; k <= 4; ++k) conv(prefix + ".conv" + std::to_string(k), hidden, hidden);
  store.add(prefix + ".conv5.w", Tensor({1, 3, 3, hidden}, 0.0), "conv_weight");
  store.add(prefix + ".conv5.b", Tensor({1}, 0.0), "conv_bias");
}

MdVariant parse_md_variant(const std::string& s) {
  if (s == "a" || s == "plain") return MdVariant::kPlain;
  if (s == "b" || s == "sigmoid") return MdVariant::kSigmoid;
  if (s == "c" || s == "sigmoid_logit") return MdVariant::kSigmoidLogit;
  throw InvalidArgument("unknown mask denoiser variant '" + s + "'");
}

std::string to_string(MdVariant v) {
  switch (v) {
    case MdVariant::kPlain: return "a";
    case MdVariant::kSigmoid: return "b";
    case MdVariant::kSigmoidLogit: return "c";
  }
  return "?";
}

Var md_forward(const ParamBinding& params, const std::string& prefix, const Var& u, MdVariant variant) {
  if (u.value().rank() != 2) throw InvalidArgument("md_forward: input must be [H, W]");
  const int h = u.value().dim(0), w = u.value().dim(1);
  Var x = ops::reshape(u, {h, w, 1});
  for (int k = 1; k <= 4; ++k) {
    const std::string layer = prefix + ".conv" + std::to_string(k);
    x = ops::relu(ops::conv3x3(x, params[layer + ".w"], params[layer + ".b"], 1));
  }
  Var r = ops::reshape(ops::conv3x3(x, params[prefix + ".conv5.w"], params[prefix + ".conv5.b"], 1), {h, w});
  switch (variant) {
    case MdVariant::kPlain: return r;
    case MdVariant::kSigmoid: return ops::sigmoid(r);
    case MdVariant::kSigmoidLogit: return ops::sigmoid_logit_skip(r, u, kLogitClamp);
  }
  throw InvalidArgument("md_forward: bad variant");
}

ScalarGrid md_forward(const ScalarGrid& u, const ParamStore& params, const std::string& prefix, MdVariant variant) {
  Tape tape;
  ParamBinding bound(tape, params, false);
  return to_scalar_grid(md_forward(bound, prefix, tape.constant(to_tensor(u)), variant).value());
}

MaskDenoiser::MaskDenoiser(std::shared_ptr<const ParamStore> params, std::string prefix, MdVariant variant)
    : params_(std::move(params)), prefix_(std::move(prefix)), variant_(variant) {
  if (!params_) throw InvalidArgument("MaskDenoiser: no parameters");
}

core::DualField MaskDenoiser::apply(const core::DualField& z) const {
  core::DualField out(z.shape(), z.channels());
  for (int c = 0; c < z.channels(); ++c) {
    const ScalarGrid d = md_forward(core::channel_of(z, c), *params_, prefix_, variant_);
    for (std::size_t p = 0; p < z.shape().pixels(); ++p) out.at(p, c) = d.at(p, 0);
  }
  return out;
}

}  // namespace lms::nn
