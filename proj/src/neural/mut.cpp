#include <cmath>
#include <limits>

#include "lms/neural/networks.hpp"
#include "lms/solver/fidelity.hpp"

namespace lms::nn {

using core::InvalidArgument;

std::vector<double> masking_matrix(std::span<const double> rows, int count, std::span<const double> l1) {
  if (count < 1 || rows.size() != static_cast<std::size_t>(count) * l1.size())
    throw InvalidArgument("masking_matrix: bank and prototype sizes disagree");
  std::vector<double> s(count);
  double lo = std::numeric_limits<double>::infinity(), total = 0.0;
  for (int n = 0; n < count; ++n) {
    s[n] = solver::kernel::dot(rows.subspan(static_cast<std::size_t>(n) * l1.size(), l1.size()), l1);
    lo = std::min(lo, s[n]);
    total += s[n];
  }
  const double threshold = (lo + total / count) / 2.0;
  std::vector<double> m(count);
  for (int n = 0; n < count; ++n) m[n] = s[n] > threshold ? 0.0 : -std::numeric_limits<double>::infinity();
  return m;
}

std::vector<double> masking_matrix(const ProtoBank& p, std::span<const double> l1) {
  if (p.channels() != static_cast<int>(l1.size())) throw InvalidArgument("masking_matrix: channel mismatch");
  return masking_matrix(p.values(), p.count(), l1);
}

void add_mut_params(ParamStore& store, const std::string& prefix, int channels, const MutConfig& cfg,
                    std::mt19937_64& rng) {
  if (cfg.heads < 1 || channels % cfg.heads != 0)
    throw InvalidArgument("MUT: channels must be divisible by the head count");
  const int c = channels, hidden = cfg.mlp_ratio * channels;
  for (const char* ln : {"ln1", "ln2", "ln3"}) {
    store.add(prefix + "." + ln + ".gamma", Tensor({c}, 1.0), "ln_scale");
    store.add(prefix + "." + ln + ".beta", Tensor({c}, 0.0), "ln_offset");
  }
  const double proj_std = std::sqrt(1.0 / c);
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    store.add(prefix + ".attn." + w, normal_tensor({c, c}, proj_std, rng), "attn_weight");
    // A key bias shifts every score in a row equally and cancels in the softmax.
    if (w[1] != 'k') store.add(prefix + ".attn.b" + std::string(w + 1), Tensor({c}, 0.0), "attn_bias");
  }
  store.add(prefix + ".mlp.w1", normal_tensor({c, hidden}, std::sqrt(2.0 / c), rng), "mlp_weight");
  store.add(prefix + ".mlp.b1", Tensor({hidden}, 0.0), "mlp_bias");
  store.add(prefix + ".mlp.w2", normal_tensor({hidden, c}, std::sqrt(1.0 / hidden), rng), "mlp_weight");
  store.add(prefix + ".mlp.b2", Tensor({c}, 0.0), "mlp_bias");
}

namespace {

Var multi_head_self_attention(const ParamBinding& params, const std::string& prefix, const Var& p, int heads) {
  const int c = p.value().dim(1);
  const int dh = c / heads;
  const std::string a = prefix + ".attn.";
  const Var q = ops::add_bias(ops::matmul(p, params[a + "wq"]), params[a + "bq"]);
  const Var k = ops::matmul(p, params[a + "wk"]);
  const Var v = ops::add_bias(ops::matmul(p, params[a + "wv"]), params[a + "bv"]);
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    const Var qh = ops::slice_cols(q, h * dh, dh);
    const Var kh = ops::slice_cols(k, h * dh, dh);
    const Var vh = ops::slice_cols(v, h * dh, dh);
    const Var scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    outs.push_back(ops::matmul(ops::softmax_last(scores), vh));
  }
  return ops::add_bias(ops::matmul(ops::concat_cols(outs), params[a + "wo"]), params[a + "bo"]);
}

Var layer_norm(const ParamBinding& params, const std::string& name, const Var& x) {
  return ops::layer_norm_rows(x, params[name + ".gamma"], params[name + ".beta"]);
}

}  // namespace

MutOutput mut_forward(const ParamBinding& params, const std::string& prefix, const Var& p, const Var& l1,
                      const MutConfig& cfg) {
  const Tensor& pv = p.value();
  if (pv.rank() != 2 || l1.value().rank() != 1 || l1.value().dim(0) != pv.dim(1))
    throw InvalidArgument("mut_forward: bank " + pv.shape_str() + " vs prototype " + l1.value().shape_str());

  const std::vector<double> mask = masking_matrix(pv.data, pv.dim(0), l1.value().data);
  std::vector<bool> keep(mask.size());
  for (std::size_t n = 0; n < mask.size(); ++n) keep[n] = mask[n] == 0.0;

  Var x = layer_norm(params, prefix + ".ln1", ops::add(ops::single_key_attention(p, l1, keep), p));
  x = layer_norm(params, prefix + ".ln2", ops::add(multi_head_self_attention(params, prefix, x, cfg.heads), x));
  const Var hidden = ops::gelu(ops::add_bias(ops::matmul(x, params[prefix + ".mlp.w1"]), params[prefix + ".mlp.b1"]));
  const Var mlp = ops::add_bias(ops::matmul(hidden, params[prefix + ".mlp.w2"]), params[prefix + ".mlp.b2"]);
  x = layer_norm(params, prefix + ".ln3", ops::add(mlp, x));
  const Var gap = ops::mean_rows(x);
  return {x, gap, ops::neg(gap)};
}

std::pair<ProtoBank, PrototypePair> mut_forward(const ProtoBank& p, std::span<const double> l1,
                                                const ParamStore& params, const std::string& prefix,
                                                const MutConfig& cfg) {
  Tape tape;
  ParamBinding bound(tape, params, false);
  const MutOutput out = mut_forward(bound, prefix, tape.constant(to_tensor(p)), tape.constant(to_tensor(l1)), cfg);
  ProtoBank bank(p.count(), p.channels(), out.p.value().data);
  return {std::move(bank), PrototypePair{out.l1.value().data, out.l2.value().data}};
}

}  // namespace lms::nn
