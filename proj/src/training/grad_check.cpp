#include "lms/training/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>

#include "lms/training/losses.hpp"

namespace lms::training {

using core::BinaryMask;
using core::GridShape;
using core::ScalarGrid;
using core::InvalidArgument;
namespace ops = nn::ops;

namespace {

using LossFn = std::function<Var(const ParamBinding&)>;

struct Problem {
  ParamStore inputs;
  LossFn loss;
  /// Probe the largest-magnitude analytic entries instead of random ones.
  bool largest_entries = false;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

Tensor uniform_tensor(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = uniform(rng, lo, hi);
  return t;
}

/// sum(R * x) with a fixed random R, turning any output into a scalar.
Var readout(const Var& x, std::uint64_t salt) {
  std::mt19937_64 rng(salt);
  return ops::sum(ops::mul(x, x.tape()->constant(uniform_tensor(x.shape(), -1.0, 1.0, rng))));
}

/// Gives every zero-initialized tensor (biases, MD output layer) random
/// values so the check does not sit on a symmetric or degenerate point.
void randomize_zeros(ParamStore& store, std::mt19937_64& rng, double scale) {
  for (const std::string& id : store.ids()) {
    Tensor& t = store.get_mut(id);
    if (std::all_of(t.data.begin(), t.data.end(), [](double v) { return v == 0.0; }))
      for (double& v : t.data) v = uniform(rng, -scale, scale);
  }
}

Episode random_episode(std::mt19937_64& rng, int size) {
  const GridShape shape(size, size);
  const auto make = [&](BinaryMask& mask, ScalarGrid& image) {
    mask = BinaryMask(shape);
    const int h = size / 2, w = size / 2;
    const int y0 = 4 * static_cast<int>(rng() % (size / 4 - 1));
    const int x0 = 4 * static_cast<int>(rng() % (size / 4 - 1));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) mask.set(y0 + y, x0 + x, true);
    image = core::make_scalar(shape);
    for (std::size_t p = 0; p < shape.pixels(); ++p)
      image.at(p, 0) = std::clamp(0.25 + 0.5 * mask.at(p) + uniform(rng, -0.3, 0.3), 0.0, 1.0);
  };
  Episode ep;
  make(ep.support_mask, ep.support_image);
  BinaryMask gt;
  make(gt, ep.query_image);
  ep.query_gt = gt;
  return ep;
}

ModelConfig small_model(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.backbone = {4, 8, 8};
  cfg.md_hidden = 8;
  cfg.mut = {2, 2};
  cfg.n_p = 4;
  cfg.alpha = 4.0;
  cfg.seed = seed;
  return cfg;
}

void add_input(ParamStore& store, const std::string& id, Tensor t) { store.add(id, std::move(t), "input"); }

Problem half_sq_norm(std::mt19937_64& rng) {
  Problem pb;
  add_input(pb.inputs, "w", uniform_tensor({7}, -2.0, 2.0, rng));
  pb.loss = [](const ParamBinding& p) { return ops::scale(ops::sum(ops::mul(p["w"], p["w"])), 0.5); };
  return pb;
}

Problem feature_extract_problem(std::mt19937_64& rng) {
  Problem pb;
  nn::add_backbone_params(pb.inputs, {4, 6, 5}, rng);
  randomize_zeros(pb.inputs, rng, 0.1);
  const std::uint64_t salt = rng();
  const Tensor image = uniform_tensor({12, 12}, 0.0, 1.0, rng);
  pb.loss = [=](const ParamBinding& p) {
    return readout(nn::feature_extract(p, p.tape().constant(image)), salt);
  };
  return pb;
}

Problem md_problem(std::mt19937_64& rng, nn::MdVariant variant) {
  Problem pb;
  nn::add_md_params(pb.inputs, "md", 4, rng);
  randomize_zeros(pb.inputs, rng, 0.2);
  add_input(pb.inputs, "u", uniform_tensor({6, 6}, 0.02, 0.98, rng));
  const std::uint64_t salt = rng();
  pb.loss = [=](const ParamBinding& p) { return readout(nn::md_forward(p, "md", p["u"], variant), salt); };
  return pb;
}

Problem mut_problem(std::mt19937_64& rng) {
  Problem pb;
  const nn::MutConfig cfg{2, 2};
  nn::add_mut_params(pb.inputs, "mut", 6, cfg, rng);
  randomize_zeros(pb.inputs, rng, 0.1);
  for (const char* ln : {"ln1", "ln2", "ln3"})
    for (double& g : pb.inputs.get_mut(std::string("mut.") + ln + ".gamma").data) g = uniform(rng, 0.5, 1.5);
  add_input(pb.inputs, "p", uniform_tensor({5, 6}, -1.0, 1.0, rng));
  add_input(pb.inputs, "l1", uniform_tensor({6}, -1.0, 1.0, rng));
  const std::uint64_t salt_p = rng(), salt_l = rng();
  pb.loss = [=](const ParamBinding& p) {
    const nn::MutOutput out = nn::mut_forward(p, "mut", p["p"], p["l1"], cfg);
    return ops::add(readout(out.p, salt_p), readout(out.l1, salt_l));
  };
  return pb;
}

Problem dc_problem(std::mt19937_64& rng) {
  Problem pb;
  add_input(pb.inputs, "features", uniform_tensor({5, 5, 4}, -1.0, 1.0, rng));
  add_input(pb.inputs, "l1", uniform_tensor({4}, -1.0, 1.0, rng));
  add_input(pb.inputs, "l2", uniform_tensor({4}, -1.0, 1.0, rng));
  add_input(pb.inputs, "v", uniform_tensor({5, 5, 2}, -0.2, 0.2, rng));
  const double alpha = uniform(rng, 1.0, 5.0);
  const std::uint64_t salt = rng();
  pb.loss = [=](const ParamBinding& p) {
    return readout(dc_layer(p["features"], p["l1"], p["l2"], p["v"], alpha, 1e-8), salt);
  };
  return pb;
}

Problem dual_problem(std::mt19937_64& rng) {
  Problem pb;
  nn::add_md_params(pb.inputs, "md", 4, rng);
  randomize_zeros(pb.inputs, rng, 0.2);
  add_input(pb.inputs, "u", uniform_tensor({5, 5, 2}, 0.02, 0.98, rng));
  add_input(pb.inputs, "v_prev", uniform_tensor({5, 5, 2}, -0.01, 0.01, rng));
  add_input(pb.inputs, "delta_raw", Tensor::scalar(uniform(rng, 0.0, 1.0)));
  const std::uint64_t salt = rng();
  pb.loss = [=](const ParamBinding& p) {
    const Var delta = ops::softplus(p["delta_raw"]);
    return readout(dual_update_var(p, p["u"], p["v_prev"], delta, "md", nn::MdVariant::kSigmoidLogit), salt);
  };
  return pb;
}

Problem ce_problem(std::mt19937_64& rng) {
  Problem pb;
  add_input(pb.inputs, "u", uniform_tensor({4, 4, 2}, 0.05, 0.95, rng));
  BinaryMask gt(GridShape(8, 8));
  for (std::size_t p = 0; p < gt.shape().pixels(); ++p) gt.set(p, rng() % 2 == 0);
  pb.loss = [gt](const ParamBinding& p) { return ce_loss(p["u"], gt); };
  return pb;
}

Problem upsample_problem(std::mt19937_64& rng) {
  Problem pb;
  add_input(pb.inputs, "x", uniform_tensor({3, 5, 2}, -1.0, 1.0, rng));
  const std::uint64_t salt = rng();
  pb.loss = [=](const ParamBinding& p) { return readout(ops::upsample_bilinear(p["x"], 4), salt); };
  return pb;
}

Problem model_problem(std::mt19937_64& rng, const std::string& which) {
  Problem pb;
  ModelConfig cfg = small_model(rng());
  if (which == "total_loss_upsampled") cfg.upsample_loss = true;
  if (which == "par_loss") {
    cfg.flms_mode = true;
    cfg.use_pdnet = false;
    cfg.stages = 1;
  }
  pb.inputs = init_params(cfg);
  randomize_zeros(pb.inputs, rng, 1.0);
  for (int k = 1; k <= cfg.stages; ++k)
    if (pb.inputs.contains(ModelConfig::delta_id(k)))
      pb.inputs.get_mut(ModelConfig::delta_id(k)).data[0] = uniform(rng, -0.5, 0.5);
  pb.largest_entries = true;
  const Episode ep = random_episode(rng, 16);
  const std::uint64_t salt = rng();
  pb.loss = [=](const ParamBinding& p) {
    if (which == "par_loss") return par_loss(lms_forward(p, ep, cfg), ep, cfg);
    if (which == "lms_forward") return readout(lms_forward(p, ep, cfg).u_final, salt);
    return total_loss(p, ep, cfg).total;
  };
  return pb;
}

const std::map<std::string, std::function<Problem(std::mt19937_64&, int)>>& registry() {
  static const std::map<std::string, std::function<Problem(std::mt19937_64&, int)>> r = {
      {"half_sq_norm", [](std::mt19937_64& g, int) { return half_sq_norm(g); }},
      {"feature_extract", [](std::mt19937_64& g, int) { return feature_extract_problem(g); }},
      {"md_forward",
       [](std::mt19937_64& g, int trial) {
         static const nn::MdVariant variants[] = {nn::MdVariant::kSigmoidLogit, nn::MdVariant::kSigmoid,
                                                  nn::MdVariant::kPlain};
         return md_problem(g, variants[trial % 3]);
       }},
      {"mut_forward", [](std::mt19937_64& g, int) { return mut_problem(g); }},
      {"data_consistency", [](std::mt19937_64& g, int) { return dc_problem(g); }},
      {"dual_update", [](std::mt19937_64& g, int) { return dual_problem(g); }},
      {"ce_loss", [](std::mt19937_64& g, int) { return ce_problem(g); }},
      {"par_loss", [](std::mt19937_64& g, int) { return model_problem(g, "par_loss"); }},
      {"total_loss", [](std::mt19937_64& g, int) { return model_problem(g, "total_loss"); }},
      {"lms_forward", [](std::mt19937_64& g, int) { return model_problem(g, "lms_forward"); }},
      {"total_loss_upsampled", [](std::mt19937_64& g, int) { return model_problem(g, "total_loss_upsampled"); }},
      {"upsample_bilinear", [](std::mt19937_64& g, int) { return upsample_problem(g); }},
  };
  return r;
}

double evaluate(const Problem& pb, const ParamStore& inputs) {
  Tape tape;
  ParamBinding bound(tape, inputs, false);
  return pb.loss(bound).value().item();
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

std::vector<std::string> grad_check_ops() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

GradCheckReport grad_check(const std::string& op, int trials, std::uint64_t seed, const GradCheckOptions& opts) {
  auto it = registry().find(op);
  if (it == registry().end()) throw InvalidArgument("grad_check: unknown op '" + op + "'");
  if (trials < 1) throw InvalidArgument("grad_check: trials must be positive");
  GradCheckReport report;
  report.op = op;
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const Problem pb = it->second(rng, trial);
    GradStore grads;
    {
      Tape tape;
      ParamBinding bound(tape, pb.inputs, true);
      tape.backward(pb.loss(bound));
      grads = bound.gradients();
    }
    ParamStore probe = pb.inputs;
    const double floor = opts.resolution_floor * std::max(1.0, std::abs(evaluate(pb, pb.inputs)));
    // Central difference of the loss along dir for tensor id.
    const auto central = [&](const std::string& id, const std::vector<std::pair<std::size_t, double>>& dir, double h) {
      std::vector<double>& x = probe.get_mut(id).data;
      for (const auto& [i, d] : dir) x[i] += h * d;
      const double up = evaluate(pb, probe);
      for (const auto& [i, d] : dir) x[i] -= 2.0 * h * d;
      const double down = evaluate(pb, probe);
      x = pb.inputs.get(id).data;
      return (up - down) / (2.0 * h);
    };
    const auto check = [&](const std::string& id, const std::string& what, double analytic,
                           const std::vector<std::pair<std::size_t, double>>& dir) {
      analytic += opts.analytic_perturbation;
      const double numeric = central(id, dir, opts.step);
      double err = relative_error(analytic, numeric);
      if (std::max(std::abs(analytic), std::abs(numeric)) < floor) {
        ++report.below_resolution;
        return;
      }
      if (err > opts.tolerance) {
        // A non-smooth point (ReLU kink, binarization flip) inside the
        // stencil shows up as step-size dependence of the difference itself.
        const double half = central(id, dir, opts.step / 2.0);
        if (relative_error(numeric, half) > opts.tolerance) {
          ++report.nonsmooth_skipped;
          return;
        }
      }
      ++report.entries_checked;
      if (err > report.max_rel_error || report.worst_entry.empty()) {
        report.max_rel_error = err;
        char buf[96];
        std::snprintf(buf, sizeof buf, " analytic %.6e numeric %.6e", analytic, numeric);
        report.worst_entry = what + buf;
      }
    };
    for (const std::string& id : pb.inputs.ids()) {
      const std::vector<double>& g = grads.at(id).data;
      const std::size_t n = g.size();

      // Whole-tensor directional derivative: along the normalized gradient
      // for model-level problems, along random signs otherwise.
      std::vector<std::pair<std::size_t, double>> dir(n);
      double gmax = 0.0;
      for (double v : g) gmax = std::max(gmax, std::abs(v));
      double directional = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pb.largest_entries ? (gmax > 0.0 ? g[i] / gmax : 1.0) : (rng() % 2 == 0 ? 1.0 : -1.0);
        dir[i] = {i, d};
        directional += g[i] * d;
      }
      check(id, id + "<dir>", directional, dir);

      std::vector<std::size_t> picks(n);
      for (std::size_t i = 0; i < n; ++i) picks[i] = i;
      const std::size_t want = static_cast<std::size_t>(opts.entries_per_tensor);
      if (n > want) {
        if (pb.largest_entries) {
          std::stable_sort(picks.begin(), picks.end(),
                           [&](std::size_t a, std::size_t b) { return std::abs(g[a]) > std::abs(g[b]); });
        } else {
          for (std::size_t i = 0; i < want; ++i) std::swap(picks[i], picks[i + rng() % (n - i)]);
        }
        picks.resize(want);
      }
      for (std::size_t i : picks) check(id, id + "[" + std::to_string(i) + "]", g[i], {{i, 1.0}});
    }
  }
  return report;
}

}  // namespace lms::training
