#include "lms/training/losses.hpp"

#include "lms/core/metrics.hpp"

namespace lms::training {

using core::BinaryMask;
using core::GridShape;
using core::InvalidArgument;
namespace ops = nn::ops;

namespace {

Tensor one_hot(const BinaryMask& m) {
  Tensor t({m.shape().height, m.shape().width, 2});
  for (std::size_t p = 0; p < m.shape().pixels(); ++p) {
    t.data[2 * p] = m.at(p) ? 1.0 : 0.0;
    t.data[2 * p + 1] = m.at(p) ? 0.0 : 1.0;
  }
  return t;
}

BinaryMask at_resolution(const BinaryMask& gt, GridShape target) {
  const GridShape& s = gt.shape();
  if (s == target) return gt;
  if (s.height % target.height != 0 || s.width % target.width != 0)
    throw InvalidArgument("ce_loss: ground truth " + s.str() + " does not reduce to " + target.str());
  return core::downsample_mask(gt, target);
}

Var ce_against(const Var& u, const BinaryMask& gt, bool upsample) {
  const Tensor& uv = u.value();
  if (uv.rank() != 3 || uv.dim(2) != 2) throw InvalidArgument("ce_loss: u must be [H, W, 2]");
  const GridShape ushape(uv.dim(0), uv.dim(1));
  if (upsample && !(gt.shape() == ushape)) {
    if (gt.shape().height % ushape.height != 0)
      throw InvalidArgument("ce_loss: cannot upsample " + ushape.str() + " to " + gt.shape().str());
    const Var up = ops::upsample_bilinear(u, gt.shape().height / ushape.height);
    return ce_loss(up, gt);
  }
  return ops::cross_entropy(u, u.tape()->constant(one_hot(at_resolution(gt, ushape))), kLossClamp);
}

}  // namespace

Var ce_loss(const Var& u, const BinaryMask& gt) { return ce_against(u, gt, false); }

double ce_loss(const core::SoftMask& u, const BinaryMask& gt) {
  Tape tape;
  return ce_loss(tape.constant(nn::to_tensor(u)), gt).value().item();
}

Var par_loss(const ForwardVars& fwd, const Episode& episode, const ModelConfig& cfg) {
  Tape& tape = *fwd.u_final.tape();
  const BinaryMask pred = core::binarize(nn::to_soft_mask(fwd.u_final.value()));
  if (pred.empty()) return tape.constant(Tensor::scalar(0.0));

  const auto indicator = [&](bool fg) {
    Tensor t({pred.shape().height, pred.shape().width});
    for (std::size_t p = 0; p < pred.shape().pixels(); ++p) t.data[p] = (pred.at(p) != 0) == fg ? 1.0 : 0.0;
    return t;
  };
  const Var l1 = ops::masked_average(fwd.query_features, tape.constant(indicator(true)), cfg.beta1);
  const Var l2 = pred.count() == pred.shape().pixels()
                     ? ops::neg(l1)
                     : ops::masked_average(fwd.query_features, tape.constant(indicator(false)), cfg.beta2);
  const Tensor& fs = fwd.support_features.value();
  const Var zero_v = tape.constant(Tensor({fs.dim(0), fs.dim(1), 2}, 0.0));
  const Var u_support = dc_layer(fwd.support_features, l1, l2, zero_v, cfg.alpha, cfg.cosine_eps);
  return ce_against(u_support, episode.support_mask, cfg.upsample_loss);
}

LossVars total_loss(const ParamBinding& params, const Episode& episode, const ModelConfig& cfg) {
  if (!episode.query_gt) throw InvalidArgument("total_loss: episode has no query ground truth");
  LossVars out;
  out.forward = lms_forward(params, episode, cfg);
  out.ce = ce_against(out.forward.u_final, *episode.query_gt, cfg.upsample_loss);
  out.par = par_loss(out.forward, episode, cfg);
  out.total = ops::add(out.ce, out.par);
  return out;
}

}  // namespace lms::training
