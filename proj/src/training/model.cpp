#include "lms/training/model.hpp"

#include <algorithm>
#include <random>

#include "lms/core/metrics.hpp"

namespace lms::training {

using core::BinaryMask;
using core::GridShape;
using core::InvalidArgument;
namespace ops = nn::ops;

void ModelConfig::validate() const {
  if (stages < 1) throw InvalidArgument("model: stages must be >= 1");
  if (!(alpha > 0.0)) throw InvalidArgument("model: alpha must be positive");
  if (n_p < 1) throw InvalidArgument("model: n_p must be >= 1");
  if (md_hidden < 1) throw InvalidArgument("model: md_hidden must be >= 1");
  if (backbone.width1 < 1 || backbone.width2 < 1 || backbone.channels < 1)
    throw InvalidArgument("model: backbone widths must be positive");
  if (mut.heads < 1 || backbone.channels % mut.heads != 0)
    throw InvalidArgument("model: feature channels must be divisible by the MUT head count");
  if (mut.mlp_ratio < 1) throw InvalidArgument("model: mlp_ratio must be >= 1");
}

solver::SolverConfig ModelConfig::solver() const {
  solver::SolverConfig s;
  s.alpha = alpha;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.cosine_eps = cosine_eps;
  return s;
}

std::string ModelConfig::md_prefix(int stage) const {
  return share_md ? "shared.md" : "stage" + std::to_string(stage) + ".md";
}

std::string ModelConfig::mut_prefix(int stage) const {
  return share_mut ? "shared.mut" : "stage" + std::to_string(stage) + ".mut";
}

std::string ModelConfig::delta_id(int stage) { return "stage" + std::to_string(stage) + ".delta_raw"; }

ParamStore init_params(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ParamStore store;
  nn::add_backbone_params(store, cfg.backbone, rng);
  for (int k = 1; k <= cfg.stages; ++k) {
    if (cfg.use_pdnet && !store.contains(cfg.md_prefix(k) + ".conv1.w"))
      nn::add_md_params(store, cfg.md_prefix(k), cfg.md_hidden, rng);
    if (!cfg.flms_mode && !store.contains(cfg.mut_prefix(k) + ".ln1.gamma"))
      nn::add_mut_params(store, cfg.mut_prefix(k), cfg.backbone.channels, cfg.mut, rng);
    if (cfg.use_pdnet) store.add(ModelConfig::delta_id(k), Tensor::scalar(solver::softplus_inverse(1.0)), "step");
  }
  return store;
}

Var dc_layer(const Var& features, const Var& l1, const Var& l2, const Var& v, double alpha, double eps) {
  return ops::softmax_last(
      ops::dc_logits(ops::cosine_rho(features, l1, eps), ops::cosine_rho(features, l2, eps), v, alpha));
}

Var dual_update_var(const ParamBinding& params, const Var& u, const Var& v_prev, const Var& delta,
                    const std::string& md_prefix, nn::MdVariant variant) {
  const Var z = ops::add(u, ops::div_scalar(v_prev, delta));
  std::vector<Var> denoised;
  for (int c = 0; c < 2; ++c) denoised.push_back(nn::md_forward(params, md_prefix, ops::channel(z, c), variant));
  const Var d = ops::stack_channels(denoised);
  return ops::sub(ops::add(ops::mul_scalar(u, delta), v_prev), ops::mul_scalar(d, delta));
}

namespace {

Tensor indicator(const BinaryMask& m) {
  Tensor t({m.shape().height, m.shape().width});
  for (std::size_t p = 0; p < m.shape().pixels(); ++p) t.data[p] = m.at(p);
  return t;
}

}  // namespace

ForwardVars lms_forward(const ParamBinding& params, const Episode& episode, const ModelConfig& cfg) {
  episode.validate();
  Tape& tape = params.tape();
  ForwardVars out;
  out.support_features = nn::feature_extract(params, tape.constant(nn::to_tensor(episode.support_image)));
  out.query_features = nn::feature_extract(params, tape.constant(nn::to_tensor(episode.query_image)));
  const Tensor& fq = out.query_features.value();
  const GridShape fshape(fq.dim(0), fq.dim(1));

  const BinaryMask fg = core::downsample_mask(episode.support_mask, fshape);
  if (fg.empty()) throw InvalidArgument("support mask vanishes at feature scale");
  out.l1_init = ops::masked_average(out.support_features, tape.constant(indicator(fg)), 1.0);
  out.l2_init = ops::neg(out.l1_init);
  const Var zero_v = tape.constant(Tensor({fshape.height, fshape.width, 2}, 0.0));
  out.u_init = dc_layer(out.query_features, out.l1_init, out.l2_init, zero_v, cfg.alpha, cfg.cosine_eps);

  Var bank;
  if (!cfg.flms_mode) {
    const int n = static_cast<int>(std::min<std::size_t>(cfg.n_p, fg.count()));
    const core::LabelGrid labels = proto::voronoi_partition(fg, n, cfg.seed);
    std::vector<Var> rows;
    for (int j = 0; j < n; ++j) {
      Tensor w({fshape.height, fshape.width}, 0.0);
      for (std::size_t p = 0; p < fshape.pixels(); ++p) w.data[p] = labels.at(p) == j ? 1.0 : 0.0;
      rows.push_back(ops::masked_average(out.support_features, tape.constant(std::move(w)), 1.0));
    }
    bank = ops::stack_rows(rows);
  }

  Var l1 = out.l1_init, l2 = out.l2_init, u = out.u_init;
  for (int k = 1; k <= cfg.stages; ++k) {
    if (!cfg.flms_mode) {
      const Var fg_weight = ops::channel(u, 0);
      double mass = 0.0;
      for (double w : fg_weight.value().data) mass += w;
      const Var pooled = mass < 1e-6 ? l1 : ops::masked_average(out.query_features, fg_weight, cfg.beta1);
      nn::MutOutput m = nn::mut_forward(params, cfg.mut_prefix(k), bank, pooled, cfg.mut);
      bank = m.p;
      l1 = m.l1;
      l2 = m.l2;
    }
    StageVars st;
    st.l1 = l1;
    st.l2 = l2;
    u = dc_layer(out.query_features, l1, l2, zero_v, cfg.alpha, cfg.cosine_eps);
    if (cfg.use_pdnet) {
      const Var delta = ops::softplus(params[ModelConfig::delta_id(k)]);
      st.v = dual_update_var(params, u, zero_v, delta, cfg.md_prefix(k), cfg.md_variant);
      u = dc_layer(out.query_features, l1, l2, st.v, cfg.alpha, cfg.cosine_eps);
    } else {
      st.v = zero_v;
    }
    st.u = u;
    out.stages.push_back(st);
  }
  out.u_final = u;
  return out;
}

ForwardResult lms_forward(const Episode& episode, const ParamStore& params, const ModelConfig& cfg) {
  Tape tape;
  ParamBinding bound(tape, params, false);
  const ForwardVars f = lms_forward(bound, episode, cfg);
  ForwardResult r;
  r.u_init = nn::to_soft_mask(f.u_init.value());
  r.l_init = {f.l1_init.value().data, f.l2_init.value().data};
  for (const StageVars& s : f.stages)
    r.stages.push_back({{s.l1.value().data, s.l2.value().data}, nn::to_soft_mask(s.u.value()), nn::to_dual(s.v.value())});
  r.u_final = nn::to_soft_mask(f.u_final.value());
  return r;
}

BinaryMask predict_mask(const core::SoftMask& u, GridShape image_shape) {
  const GridShape& s = u.shape();
  if (image_shape.height % s.height != 0 || image_shape.width % s.width != 0 ||
      image_shape.height / s.height != image_shape.width / s.width)
    throw InvalidArgument("predict_mask: " + s.str() + " does not divide " + image_shape.str());
  return core::binarize(core::upsample_bilinear(u, image_shape.height / s.height));
}

BinaryMask predict_mask(const ForwardResult& result, GridShape image_shape) {
  return predict_mask(result.u_final, image_shape);
}

}  // namespace lms::training
