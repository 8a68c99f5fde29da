#include "lms/neural/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lms/solver/fidelity.hpp"

namespace lms::nn::ops {

using core::InvalidArgument;

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw InvalidArgument("op on an unbound variable");
  return *a.tape();
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.tape() != b.tape()) throw InvalidArgument(std::string(op) + ": operands live on different tapes");
  if (a.shape() != b.shape())
    throw InvalidArgument(std::string(op) + ": shape " + a.value().shape_str() + " vs " + b.value().shape_str());
}

void require_scalar(const Var& s, const char* op) {
  if (s.value().size() != 1) throw InvalidArgument(std::string(op) + ": expected a one-element tensor");
}

template <class F, class DF>
Var unary(const char* name, const Var& a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  const int ia = a.id();
  return tape_of(a).record(name, std::move(y), {a}, [ia, df](Tape& t, const Tensor& g) {
    if (!t.needs_grad(ia)) return;
    const Tensor& x = t.value(ia);
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx.data[i] += g.data[i] * df(x.data[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = a.value().data[i] + b.value().data[i];
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record("add", std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) accumulate(t.grad_buffer(ib), g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = a.value().data[i] - b.value().data[i];
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record("sub", std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = a.value().data[i] * b.value().data[i];
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record("mul", std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& va = t.value(ia);
    const Tensor& vb = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = c * a.value().data[i];
  const int ia = a.id();
  return tape_of(a).record("scale", std::move(y), {a}, [ia, c](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += c * g.data[i];
  });
}

Var neg(const Var& a) {
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = -a.value().data[i];
  const int ia = a.id();
  return tape_of(a).record("neg", std::move(y), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] -= g.data[i];
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  require_scalar(s, "mul_scalar");
  const double sv = s.value().item();
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = a.value().data[i] * sv;
  const int ia = a.id(), is = s.id();
  return tape_of(a).record("mul_scalar", std::move(y), {a, s}, [ia, is](Tape& t, const Tensor& g) {
    const Tensor& va = t.value(ia);
    const double sv = t.value(is).item();
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * sv;
    }
    if (t.needs_grad(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data[i] * va.data[i];
      t.grad_buffer(is).data[0] += acc;
    }
  });
}

Var div_scalar(const Var& a, const Var& s) {
  require_scalar(s, "div_scalar");
  const double sv = s.value().item();
  if (sv == 0.0) throw NumericError("div_scalar: division by zero");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = a.value().data[i] / sv;
  const int ia = a.id(), is = s.id();
  return tape_of(a).record("div_scalar", std::move(y), {a, s}, [ia, is](Tape& t, const Tensor& g) {
    const Tensor& va = t.value(ia);
    const double sv = t.value(is).item();
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / sv;
    }
    if (t.needs_grad(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data[i] * va.data[i];
      t.grad_buffer(is).data[0] -= acc / (sv * sv);
    }
  });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary("sigmoid", a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var gelu(const Var& a) {
  return unary("gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
               [](double x) {
                 return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
               });
}

Var softplus(const Var& a) {
  return unary("softplus", a,
               [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
               sigmoid_scalar);
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const int ia = a.id();
  return tape_of(a).record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (auto& v : ga.data) v += g.data[0];
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const int ia = a.id();
  return tape_of(a).record("mean", Tensor::scalar(s / n), {a}, [ia, n](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (auto& v : ga.data) v += g.data[0] / n;
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  if (Tensor::count(shape) != a.value().size()) throw InvalidArgument("reshape: element count changes");
  Tensor y(std::move(shape), a.value().data);
  const int ia = a.id();
  return tape_of(a).record("reshape", std::move(y), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
  });
}

Var channel(const Var& x, int c) {
  const Tensor& v = x.value();
  if (v.rank() != 3 || c < 0 || c >= v.dim(2)) throw InvalidArgument("channel: bad channel index or rank");
  const int h = v.dim(0), w = v.dim(1), cs = v.dim(2);
  Tensor y({h, w});
  for (std::size_t p = 0; p < y.size(); ++p) y.data[p] = v.data[p * cs + c];
  const int ix = x.id();
  return tape_of(x).record("channel", std::move(y), {x}, [ix, c, cs](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t p = 0; p < g.size(); ++p) gx.data[p * cs + c] += g.data[p];
  });
}

Var stack_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("stack_channels: nothing to stack");
  const auto& s0 = parts[0].shape();
  if (s0.size() != 2) throw InvalidArgument("stack_channels: parts must be [H, W]");
  for (const auto& p : parts)
    if (p.shape() != s0) throw InvalidArgument("stack_channels: part shapes differ");
  const int k = static_cast<int>(parts.size());
  Tensor y({s0[0], s0[1], k});
  const std::size_t n = parts[0].value().size();
  for (int c = 0; c < k; ++c)
    for (std::size_t p = 0; p < n; ++p) y.data[p * k + c] = parts[c].value().data[p];
  std::vector<int> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return tape_of(parts[0]).record("stack_channels", std::move(y), parts, [ids, k](Tape& t, const Tensor& g) {
    for (int c = 0; c < k; ++c) {
      if (!t.needs_grad(ids[c])) continue;
      Tensor& gp = t.grad_buffer(ids[c]);
      for (std::size_t p = 0; p < gp.size(); ++p) gp.data[p] += g.data[p * k + c];
    }
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw InvalidArgument("stack_rows: nothing to stack");
  const auto& s0 = rows[0].shape();
  if (s0.size() != 1) throw InvalidArgument("stack_rows: rows must be vectors");
  const int n = static_cast<int>(rows.size()), c = s0[0];
  Tensor y({n, c});
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) {
    if (rows[i].shape() != s0) throw InvalidArgument("stack_rows: row lengths differ");
    std::copy(rows[i].value().data.begin(), rows[i].value().data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(i) * c);
    ids.push_back(rows[i].id());
  }
  return tape_of(rows[0]).record("stack_rows", std::move(y), rows, [ids, c](Tape& t, const Tensor& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.needs_grad(ids[i])) continue;
      Tensor& gr = t.grad_buffer(ids[i]);
      for (int k = 0; k < c; ++k) gr.data[k] += g.data[i * c + k];
    }
  });
}

Var upsample_bilinear(const Var& x, int factor) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || factor < 1) throw InvalidArgument("upsample_bilinear: expected [H, W, C] and factor >= 1");
  const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  const int ho = h * factor, wo = w * factor;
  std::vector<core::BilinearTap> ty(ho), tx(wo);
  for (int y = 0; y < ho; ++y) ty[y] = core::bilinear_tap(y, factor, h);
  for (int x = 0; x < wo; ++x) tx[x] = core::bilinear_tap(x, factor, w);
  auto at = [=](int y, int x, int k) { return (static_cast<std::size_t>(y) * w + x) * c + k; };

  Tensor out({ho, wo, c});
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x)
      for (int k = 0; k < c; ++k) {
        const core::BilinearTap &a = ty[y], &b = tx[x];
        out.data[(static_cast<std::size_t>(y) * wo + x) * c + k] =
            core::bilinear_mix(xv.data[at(a.i0, b.i0, k)], xv.data[at(a.i0, b.i1, k)], xv.data[at(a.i1, b.i0, k)],
                               xv.data[at(a.i1, b.i1, k)], a.w1, b.w1);
      }
  const int ix = x.id();
  return tape_of(x).record("upsample_bilinear", std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ix);
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x)
        for (int k = 0; k < c; ++k) {
          const core::BilinearTap &a = ty[y], &b = tx[x];
          const double gv = g.data[(static_cast<std::size_t>(y) * wo + x) * c + k];
          gx.data[at(a.i0, b.i0, k)] += gv * (1.0 - a.w1) * (1.0 - b.w1);
          gx.data[at(a.i0, b.i1, k)] += gv * (1.0 - a.w1) * b.w1;
          gx.data[at(a.i1, b.i0, k)] += gv * a.w1 * (1.0 - b.w1);
          gx.data[at(a.i1, b.i1, k)] += gv * a.w1 * b.w1;
        }
  });
}

Var conv3x3(const Var& x, const Var& w, const Var& b, int stride) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(1) != 3 || wv.dim(2) != 3 || wv.dim(3) != xv.dim(2))
    throw InvalidArgument("conv3x3: incompatible shapes x" + xv.shape_str() + " w" + wv.shape_str());
  if (b.value().rank() != 1 || b.value().dim(0) != wv.dim(0)) throw InvalidArgument("conv3x3: bias shape");
  if (stride < 1) throw InvalidArgument("conv3x3: stride must be >= 1");
  const int h = xv.dim(0), wd = xv.dim(1), ci = xv.dim(2), co = wv.dim(0);
  const int ho = (h + stride - 1) / stride, wo = (wd + stride - 1) / stride;

  // Replicate padding: taps outside the image read the nearest edge pixel.
  auto src = [=](int o, int k, int n) { return std::clamp(o * stride + k - 1, 0, n - 1); };

  Tensor y({ho, wo, co});
  const double* bd = b.value().data.data();
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      double* out = &y.data[(static_cast<std::size_t>(oy) * wo + ox) * co];
      for (int o = 0; o < co; ++o) out[o] = bd[o];
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double* in = &xv.data[(static_cast<std::size_t>(src(oy, ky, h)) * wd + src(ox, kx, wd)) * ci];
          for (int o = 0; o < co; ++o) {
            const double* wk = &wv.data[((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * ci];
            double acc = 0.0;
            for (int c = 0; c < ci; ++c) acc += wk[c] * in[c];
            out[o] += acc;
          }
        }
    }

  const int ix = x.id(), iw = w.id(), ib = b.id();
  return tape_of(x).record(
      "conv3x3", std::move(y), {x, w, b}, [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ix);
        const Tensor& wv = t.value(iw);
        const bool need_x = t.needs_grad(ix), need_w = t.needs_grad(iw), need_b = t.needs_grad(ib);
        Tensor* gx = need_x ? &t.grad_buffer(ix) : nullptr;
        Tensor* gw = need_w ? &t.grad_buffer(iw) : nullptr;
        Tensor* gb = need_b ? &t.grad_buffer(ib) : nullptr;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const double* go = &g.data[(static_cast<std::size_t>(oy) * wo + ox) * co];
            if (gb)
              for (int o = 0; o < co; ++o) gb->data[o] += go[o];
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const std::size_t in_off =
                    (static_cast<std::size_t>(src(oy, ky, h)) * wd + src(ox, kx, wd)) * ci;
                const double* in = &xv.data[in_off];
                for (int o = 0; o < co; ++o) {
                  const double gv = go[o];
                  if (gv == 0.0) continue;
                  const std::size_t w_off = ((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * ci;
                  if (gw) {
                    double* gwk = &gw->data[w_off];
                    for (int c = 0; c < ci; ++c) gwk[c] += gv * in[c];
                  }
                  if (gx) {
                    const double* wk = &wv.data[w_off];
                    double* gin = &gx->data[in_off];
                    for (int c = 0; c < ci; ++c) gin[c] += gv * wk[c];
                  }
                }
              }
          }
      });
}

Var cosine_rho(const Var& features, const Var& prototype, double eps) {
  const Tensor& f = features.value();
  const Tensor& l = prototype.value();
  if (f.rank() != 3 || l.rank() != 1 || l.dim(0) != f.dim(2)) throw InvalidArgument("cosine_rho: shape mismatch");
  const int c = f.dim(2);
  const std::size_t n = static_cast<std::size_t>(f.dim(0)) * f.dim(1);
  const double l_norm = solver::kernel::norm(l.data);
  if (l_norm == 0.0) throw InvalidArgument("degenerate prototype");
  Tensor y({f.dim(0), f.dim(1)});
  for (std::size_t p = 0; p < n; ++p)
    y.data[p] = solver::kernel::rho({f.data.data() + p * c, static_cast<std::size_t>(c)}, l.data, l_norm, eps);

  const int i_f = features.id(), il = prototype.id();
  return tape_of(features).record("cosine_rho", std::move(y), {features, prototype},
                                  [=](Tape& t, const Tensor& g) {
                                    const Tensor& f = t.value(i_f);
                                    const Tensor& l = t.value(il);
                                    const bool need_f = t.needs_grad(i_f), need_l = t.needs_grad(il);
                                    Tensor* gf = need_f ? &t.grad_buffer(i_f) : nullptr;
                                    Tensor* gl = need_l ? &t.grad_buffer(il) : nullptr;
                                    const double l2 = l_norm * l_norm;
                                    for (std::size_t p = 0; p < n; ++p) {
                                      const double* fp = &f.data[p * c];
                                      const double raw = solver::kernel::norm({fp, static_cast<std::size_t>(c)});
                                      const double fn = std::max(raw, eps);
                                      const double rho_p =
                                          solver::kernel::rho({fp, static_cast<std::size_t>(c)}, l.data, l_norm, eps);
                                      const double gv = g.data[p];
                                      if (gv == 0.0) continue;
                                      const double inv = 1.0 / (fn * l_norm);
                                      if (gl)
                                        for (int k = 0; k < c; ++k)
                                          gl->data[k] += gv * (-fp[k] * inv - rho_p * l.data[k] / l2);
                                      if (gf) {
                                        const double radial = raw > eps ? rho_p / (fn * fn) : 0.0;
                                        for (int k = 0; k < c; ++k)
                                          gf->data[p * c + k] += gv * (-l.data[k] * inv - radial * fp[k]);
                                      }
                                    }
                                  });
}

Var dc_logits(const Var& rho1, const Var& rho2, const Var& v, double alpha) {
  require_same(rho1, rho2, "dc_logits");
  const Tensor& r1 = rho1.value();
  const Tensor& vv = v.value();
  if (r1.rank() != 2 || vv.rank() != 3 || vv.dim(0) != r1.dim(0) || vv.dim(1) != r1.dim(1) || vv.dim(2) != 2)
    throw InvalidArgument("dc_logits: dual field must be [H, W, 2] matching rho");
  const std::size_t n = r1.size();
  Tensor y({r1.dim(0), r1.dim(1), 2});
  for (std::size_t p = 0; p < n; ++p) {
    y.data[2 * p] = solver::kernel::dc_logit(alpha, r1.data[p], vv.data[2 * p]);
    y.data[2 * p + 1] = solver::kernel::dc_logit(alpha, rho2.value().data[p], vv.data[2 * p + 1]);
  }
  const int i1 = rho1.id(), i2 = rho2.id(), iv = v.id();
  return tape_of(rho1).record("dc_logits", std::move(y), {rho1, rho2, v}, [=](Tape& t, const Tensor& g) {
    if (t.needs_grad(i1)) {
      Tensor& gr = t.grad_buffer(i1);
      for (std::size_t p = 0; p < n; ++p) gr.data[p] -= alpha * g.data[2 * p];
    }
    if (t.needs_grad(i2)) {
      Tensor& gr = t.grad_buffer(i2);
      for (std::size_t p = 0; p < n; ++p) gr.data[p] -= alpha * g.data[2 * p + 1];
    }
    if (t.needs_grad(iv)) {
      Tensor& gv = t.grad_buffer(iv);
      for (std::size_t i = 0; i < 2 * n; ++i) gv.data[i] -= alpha * g.data[i];
    }
  });
}

Var softmax_last(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1) throw InvalidArgument("softmax_last: rank 0");
  const int k = xv.shape.back();
  const std::size_t rows = xv.size() / static_cast<std::size_t>(k);
  Tensor y(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv.data[r * k];
    double* out = &y.data[r * k];
    if (k == 2) {
      solver::kernel::softmax2(in[0], in[1], out[0], out[1]);
      continue;
    }
    const double m = *std::max_element(in, in + k);
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += (out[i] = std::exp(in[i] - m));
    for (int i = 0; i < k; ++i) out[i] /= s;
  }
  const int ix = x.id(), self = static_cast<int>(tape_of(x).size());
  return tape_of(x).record("softmax", std::move(y), {x}, [ix, self, k, rows](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double dotp = 0.0;
      for (int i = 0; i < k; ++i) dotp += g.data[r * k + i] * yv.data[r * k + i];
      for (int i = 0; i < k; ++i) gx.data[r * k + i] += yv.data[r * k + i] * (g.data[r * k + i] - dotp);
    }
  });
}

Var masked_average(const Var& features, const Var& weights, double beta) {
  const Tensor& f = features.value();
  const Tensor& w = weights.value();
  if (f.rank() != 3 || w.rank() != 2 || w.dim(0) != f.dim(0) || w.dim(1) != f.dim(1))
    throw InvalidArgument("masked_average: weight grid does not match features");
  const int c = f.dim(2);
  const std::size_t n = w.size();
  // Same accumulation order as solver::map_pool.
  std::vector<double> acc(c, 0.0);
  double mass = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double wp = w.data[p];
    mass += wp;
    for (int k = 0; k < c; ++k) acc[k] += f.data[p * c + k] * wp;
  }
  if (mass <= solver::kEmptyRegionMass) throw InvalidArgument("empty region");
  Tensor y({c});
  for (int k = 0; k < c; ++k) y.data[k] = beta * (acc[k] / mass);
  const int i_f = features.id(), iw = weights.id();
  return tape_of(features).record("masked_average", std::move(y), {features, weights},
                                  [=](Tape& t, const Tensor& g) {
                                    const Tensor& f = t.value(i_f);
                                    const Tensor& w = t.value(iw);
                                    if (t.needs_grad(i_f)) {
                                      Tensor& gf = t.grad_buffer(i_f);
                                      for (std::size_t p = 0; p < n; ++p) {
                                        const double s = beta * w.data[p] / mass;
                                        for (int k = 0; k < c; ++k) gf.data[p * c + k] += s * g.data[k];
                                      }
                                    }
                                    if (t.needs_grad(iw)) {
                                      Tensor& gw = t.grad_buffer(iw);
                                      for (std::size_t p = 0; p < n; ++p) {
                                        double s = 0.0;
                                        for (int k = 0; k < c; ++k)
                                          s += g.data[k] * (f.data[p * c + k] - acc[k] / mass);
                                        gw.data[p] += beta * s / mass;
                                      }
                                    }
                                  });
}

namespace {

struct SkipEval {
  double out;
  double d_residual;
  double d_input;
};

SkipEval skip_eval(double r, double u, double eps) {
  const double c = std::clamp(u, eps, 1.0 - eps);
  const bool inside = c == u;
  double delta;
  if (std::abs(r) < 30.0) {
    const double e = std::expm1(r);
    delta = c * (1.0 - c) * e / (1.0 + c * e);
  } else {
    delta = sigmoid_scalar(r + std::log(c / (1.0 - c))) - c;
  }
  const double s = c + delta;  // sigmoid(r + logit c)
  const double ds = s * (1.0 - s);
  return {u + delta, ds, inside ? ds / (c * (1.0 - c)) : 1.0};
}

}  // namespace

Var sigmoid_logit_skip(const Var& residual, const Var& u, double clamp_eps) {
  require_same(residual, u, "sigmoid_logit_skip");
  const Tensor& rv = residual.value();
  const Tensor& uv = u.value();
  Tensor y(uv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = skip_eval(rv.data[i], uv.data[i], clamp_eps).out;
  const int ir = residual.id(), iu = u.id();
  return tape_of(u).record("sigmoid_logit_skip", std::move(y), {residual, u}, [=](Tape& t, const Tensor& g) {
    const Tensor& rv = t.value(ir);
    const Tensor& uv = t.value(iu);
    Tensor* gr = t.needs_grad(ir) ? &t.grad_buffer(ir) : nullptr;
    Tensor* gu = t.needs_grad(iu) ? &t.grad_buffer(iu) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const SkipEval e = skip_eval(rv.data[i], uv.data[i], clamp_eps);
      if (gr) gr->data[i] += g.data[i] * e.d_residual;
      if (gu) gu->data[i] += g.data[i] * e.d_input;
    }
  });
}

Var cross_entropy(const Var& u, const Var& target, double clamp_eps) {
  require_same(u, target, "cross_entropy");
  const Tensor& uv = u.value();
  const Tensor& tv = target.value();
  if (uv.rank() != 3 || uv.dim(2) != 2) throw InvalidArgument("cross_entropy: expected [H, W, 2]");
  const double n = static_cast<double>(uv.dim(0)) * uv.dim(1);
  double s = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i)
    if (tv.data[i] != 0.0) s += tv.data[i] * std::log(std::clamp(uv.data[i], clamp_eps, 1.0 - clamp_eps));
  const int iu = u.id(), it = target.id();
  return tape_of(u).record("cross_entropy", Tensor::scalar(-s / n), {u, target}, [=](Tape& t, const Tensor& g) {
    const Tensor& uv = t.value(iu);
    const Tensor& tv = t.value(it);
    if (t.needs_grad(iu)) {
      Tensor& gu = t.grad_buffer(iu);
      for (std::size_t i = 0; i < uv.size(); ++i) {
        const double x = uv.data[i];
        if (tv.data[i] != 0.0 && x > clamp_eps && x < 1.0 - clamp_eps)
          gu.data[i] -= g.data[0] * tv.data[i] / (x * n);
      }
    }
    if (t.needs_grad(it)) {
      Tensor& gt = t.grad_buffer(it);
      for (std::size_t i = 0; i < uv.size(); ++i)
        gt.data[i] -= g.data[0] * std::log(std::clamp(uv.data[i], clamp_eps, 1.0 - clamp_eps)) / n;
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw InvalidArgument("matmul: " + av.shape_str() + " x " + bv.shape_str());
  const int n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor y({n, m});
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av.data[static_cast<std::size_t>(i) * k + p];
      for (int j = 0; j < m; ++j) y.data[static_cast<std::size_t>(i) * m + j] += aip * bv.data[static_cast<std::size_t>(p) * m + j];
    }
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record("matmul", std::move(y), {a, b}, [=](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < m; ++j) s += g.data[static_cast<std::size_t>(i) * m + j] * bv.data[static_cast<std::size_t>(p) * m + j];
          ga.data[static_cast<std::size_t>(i) * k + p] += s;
        }
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const double aip = av.data[static_cast<std::size_t>(i) * k + p];
          for (int j = 0; j < m; ++j) gb.data[static_cast<std::size_t>(p) * m + j] += aip * g.data[static_cast<std::size_t>(i) * m + j];
        }
    }
  });
}

Var transpose(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw InvalidArgument("transpose: expected a matrix");
  const int n = av.dim(0), m = av.dim(1);
  Tensor y({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) y.data[static_cast<std::size_t>(j) * n + i] = av.data[static_cast<std::size_t>(i) * m + j];
  const int ia = a.id();
  return tape_of(a).record("transpose", std::move(y), {a}, [=](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga.data[static_cast<std::size_t>(i) * m + j] += g.data[static_cast<std::size_t>(j) * n + i];
  });
}

Var add_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || b.value().rank() != 1 || b.value().dim(0) != xv.dim(1))
    throw InvalidArgument("add_bias: shape mismatch");
  const int n = xv.dim(0), m = xv.dim(1);
  Tensor y = xv;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) y.data[static_cast<std::size_t>(i) * m + j] += b.value().data[j];
  const int ix = x.id(), ib = b.id();
  return tape_of(x).record("add_bias", std::move(y), {x, b}, [=](Tape& t, const Tensor& g) {
    if (t.needs_grad(ix)) accumulate(t.grad_buffer(ix), g);
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb.data[j] += g.data[static_cast<std::size_t>(i) * m + j];
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || gamma.value().size() != static_cast<std::size_t>(xv.dim(1)) ||
      beta.value().size() != static_cast<std::size_t>(xv.dim(1)))
    throw InvalidArgument("layer_norm_rows: shape mismatch");
  const int n = xv.dim(0), c = xv.dim(1);
  Tensor y({n, c});
  std::vector<double> xhat(xv.size()), inv_std(n);
  for (int i = 0; i < n; ++i) {
    const double* row = &xv.data[static_cast<std::size_t>(i) * c];
    double mu = 0.0;
    for (int k = 0; k < c; ++k) mu += row[k];
    mu /= c;
    double var = 0.0;
    for (int k = 0; k < c; ++k) var += (row[k] - mu) * (row[k] - mu);
    var /= c;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int k = 0; k < c; ++k) {
      const std::size_t j = static_cast<std::size_t>(i) * c + k;
      xhat[j] = (row[k] - mu) * inv_std[i];
      y.data[j] = xhat[j] * gamma.value().data[k] + beta.value().data[k];
    }
  }
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return tape_of(x).record("layer_norm", std::move(y), {x, gamma, beta}, [=](Tape& t, const Tensor& g) {
    const Tensor& gm = t.value(ig);
    if (t.needs_grad(ig)) {
      Tensor& gg = t.grad_buffer(ig);
      for (std::size_t j = 0; j < g.size(); ++j) gg.data[j % c] += g.data[j] * xhat[j];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t j = 0; j < g.size(); ++j) gb.data[j % c] += g.data[j];
    }
    if (t.needs_grad(ix)) {
      Tensor& gx = t.grad_buffer(ix);
      for (int i = 0; i < n; ++i) {
        const std::size_t o = static_cast<std::size_t>(i) * c;
        double m1 = 0.0, m2 = 0.0;
        for (int k = 0; k < c; ++k) {
          const double d = g.data[o + k] * gm.data[k];
          m1 += d;
          m2 += d * xhat[o + k];
        }
        m1 /= c;
        m2 /= c;
        for (int k = 0; k < c; ++k)
          gx.data[o + k] += inv_std[i] * (g.data[o + k] * gm.data[k] - m1 - xhat[o + k] * m2);
      }
    }
  });
}

Var slice_cols(const Var& x, int start, int len) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || start < 0 || len < 1 || start + len > xv.dim(1)) throw InvalidArgument("slice_cols: range");
  const int n = xv.dim(0), m = xv.dim(1);
  Tensor y({n, len});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) y.data[static_cast<std::size_t>(i) * len + j] = xv.data[static_cast<std::size_t>(i) * m + start + j];
  const int ix = x.id();
  return tape_of(x).record("slice_cols", std::move(y), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ix);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < len; ++j) gx.data[static_cast<std::size_t>(i) * m + start + j] += g.data[static_cast<std::size_t>(i) * len + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: nothing to concatenate");
  const int n = parts[0].value().dim(0);
  std::vector<int> widths, ids;
  int m = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().dim(0) != n) throw InvalidArgument("concat_cols: row count mismatch");
    widths.push_back(p.value().dim(1));
    ids.push_back(p.id());
    m += widths.back();
  }
  Tensor y({n, m});
  int off = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const Tensor& pv = parts[q].value();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < widths[q]; ++j) y.data[static_cast<std::size_t>(i) * m + off + j] = pv.data[static_cast<std::size_t>(i) * widths[q] + j];
    off += widths[q];
  }
  return tape_of(parts[0]).record("concat_cols", std::move(y), parts, [=](Tape& t, const Tensor& g) {
    int off = 0;
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (t.needs_grad(ids[q])) {
        Tensor& gp = t.grad_buffer(ids[q]);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < widths[q]; ++j) gp.data[static_cast<std::size_t>(i) * widths[q] + j] += g.data[static_cast<std::size_t>(i) * m + off + j];
      }
      off += widths[q];
    }
  });
}

Var mean_rows(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw InvalidArgument("mean_rows: expected a matrix");
  const int n = xv.dim(0), c = xv.dim(1);
  Tensor y({c});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k) y.data[k] += xv.data[static_cast<std::size_t>(i) * c + k];
  for (auto& v : y.data) v /= n;
  const int ix = x.id();
  return tape_of(x).record("mean_rows", std::move(y), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ix);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < c; ++k) gx.data[static_cast<std::size_t>(i) * c + k] += g.data[k] / n;
  });
}

Var single_key_attention(const Var& p, const Var& l, const std::vector<bool>& keep) {
  const Tensor& pv = p.value();
  if (pv.rank() != 2 || l.value().rank() != 1 || l.value().dim(0) != pv.dim(1) ||
      keep.size() != static_cast<std::size_t>(pv.dim(0)))
    throw InvalidArgument("single_key_attention: shape mismatch");
  const int n = pv.dim(0), c = pv.dim(1);
  Tensor y({n, c});
  for (int i = 0; i < n; ++i)
    if (keep[i])
      for (int k = 0; k < c; ++k) y.data[static_cast<std::size_t>(i) * c + k] = l.value().data[k];
  // The softmax over a single unmasked score is identically 1, so no
  // gradient reaches p through the score.
  const int il = l.id();
  return tape_of(p).record("single_key_attention", std::move(y), {p, l}, [=](Tape& t, const Tensor& g) {
    if (!t.needs_grad(il)) return;
    Tensor& gl = t.grad_buffer(il);
    for (int i = 0; i < n; ++i)
      if (keep[i])
        for (int k = 0; k < c; ++k) gl.data[k] += g.data[static_cast<std::size_t>(i) * c + k];
  });
}

}  // namespace lms::nn::ops
