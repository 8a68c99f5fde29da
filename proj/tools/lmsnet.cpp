// lmsnet: corpus generation, training, evaluation and diagnostics.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lms/app/config.hpp"
#include "lms/app/evaluate.hpp"
#include "lms/app/segment_dump.hpp"
#include "lms/app/selfcheck.hpp"
#include "lms/core/metrics.hpp"
#include "lms/core/tensor_io.hpp"
#include "lms/training/grad_check.hpp"

namespace fs = std::filesystem;
using namespace lms;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitSelfcheck = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

// A config that fails to parse or validate is a usage error.
app::AppConfig resolve_config(const Globals& g) {
  try {
    app::AppConfig cfg = g.config.empty() ? app::AppConfig{} : app::load_config(g.config);
    if (g.seed) cfg.apply_seed(*g.seed);
    cfg.validate();
    return cfg;
  } catch (const core::InvalidArgument& e) {
    throw CLI::ValidationError("--config", e.what());
  }
}

app::Corpus corpus_for(const app::AppConfig& cfg, const std::string& corpus_dir) {
  if (corpus_dir.empty()) return app::generate_corpus(cfg.data);
  app::Corpus c = app::read_corpus(corpus_dir);
  cfg.split.validate(c.class_count());
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  core::write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

int cmd_gen(const Globals& g) {
  const app::AppConfig cfg = resolve_config(g);
  const app::Corpus corpus = app::generate_corpus(cfg.data);
  app::write_corpus(corpus, g.out);
  std::printf("wrote %d classes x %d instances to %s\n", cfg.data.classes, cfg.data.instances_per_class,
              g.out.c_str());
  return kExitOk;
}

int cmd_train(const Globals& g, const std::string& corpus_dir, bool quiet) {
  const app::AppConfig cfg = resolve_config(g);
  const app::Corpus corpus = corpus_for(cfg, corpus_dir);
  const fs::path out(g.out);
  fs::create_directories(out);
  write_text(out / "config.json", app::to_json(cfg).dump(2) + "\n");

  training::TrainHooks hooks;
  hooks.checkpoint_dir = out / "checkpoints";
  const int every = std::max(1, cfg.train.total_iterations / 20);
  if (!quiet)
    hooks.on_step = [every](const training::LossLogEntry& e) {
      if (e.step % every == 0) std::printf("step %6d  lr %.3e  ce %.5f  par %.5f\n", e.step, e.lr, e.ce, e.par);
    };
  const auto sampler = [&](std::mt19937_64& rng) {
    return app::sample_episode(corpus, cfg.split, app::Phase::kTrain, rng);
  };
  const training::TrainResult r =
      training::sgd_train(sampler, training::init_params(cfg.model), cfg.model, cfg.train, hooks);
  r.params.save(out / "params");
  training::write_loss_log(out / "loss_log.csv", r.log);
  std::printf("trained %d steps, final total loss %.6f; params in %s\n", cfg.train.total_iterations,
              r.log.back().total, (out / "params").c_str());
  return kExitOk;
}

/// ".../run_k2/params" -> "run_k2"; anything else is used as given.
std::string row_name(const std::string& dir) {
  const fs::path p = fs::path(dir).lexically_normal();
  const fs::path last = p.has_filename() ? p : p.parent_path();
  if (last.filename() == "params" && last.has_parent_path() && !last.parent_path().filename().empty())
    return last.parent_path().filename().string();
  return dir;
}

/// Model settings saved by `train` next to the parameters win over the
/// current config.
training::ModelConfig model_for(const std::string& params_dir, const app::AppConfig& cfg) {
  fs::path p = fs::path(params_dir).lexically_normal();
  if (!p.has_filename()) p = p.parent_path();
  const fs::path saved = p.parent_path() / "config.json";
  if (p.filename() == "params" && fs::exists(saved)) return app::load_config(saved).model;
  return cfg.model;
}

int cmd_eval(const Globals& g, const std::string& corpus_dir, const std::vector<std::string>& param_dirs,
             bool with_potts, double tv_weight, bool with_baseline) {
  const app::AppConfig cfg = resolve_config(g);
  const app::Corpus corpus = corpus_for(cfg, corpus_dir);
  const auto episodes = app::test_episodes(corpus, cfg.split, cfg.eval.episodes_per_class, cfg.eval.seed);
  app::DscTable table;
  table.classes = cfg.split.test_classes;
  const int threads = cfg.eval.threads;
  if (with_baseline) {
    training::ModelConfig base = cfg.model;
    base.flms_mode = true;
    const training::ParamStore p = training::init_params(base);
    table.rows.push_back(app::evaluate("prototype_baseline", episodes, table.classes,
                                       app::model_segmenter(p, base), threads));
  }
  if (with_potts)
    table.rows.push_back(app::evaluate("reference_potts", episodes, table.classes,
                                       app::potts_segmenter(tv_weight), threads));
  for (const std::string& dir : param_dirs) {
    const training::ParamStore p = training::ParamStore::load(dir);
    table.rows.push_back(
        app::evaluate(row_name(dir), episodes, table.classes, app::model_segmenter(p, model_for(dir, cfg)), threads));
  }
  if (table.rows.empty()) throw CLI::ValidationError("eval", "nothing to evaluate (give --params or a baseline)");
  const fs::path out(g.out);
  fs::create_directories(out);
  write_text(out / "dsc.csv", app::format_csv(table));
  write_text(out / "dsc.txt", app::format_text(table));
  std::cout << app::format_text(table);
  return kExitOk;
}

int cmd_segment(const Globals& g, const std::string& corpus_dir, const std::string& params_dir, int index) {
  const app::AppConfig cfg = resolve_config(g);
  const app::Corpus corpus = corpus_for(cfg, corpus_dir);
  const training::ParamStore params =
      params_dir.empty() ? training::init_params(cfg.model) : training::ParamStore::load(params_dir);
  const auto episodes = app::test_episodes(corpus, cfg.split, cfg.eval.episodes_per_class, cfg.eval.seed);
  if (index < 0 || static_cast<std::size_t>(index) >= episodes.size())
    throw CLI::ValidationError("--episode", "index out of range (0.." + std::to_string(episodes.size() - 1) + ")");
  const training::ModelConfig model = params_dir.empty() ? cfg.model : model_for(params_dir, cfg);
  const app::DumpSummary s = app::segment_dump(episodes[static_cast<std::size_t>(index)], params, model, g.out);
  std::printf("dumped %d stages (%zu files) to %s\n", s.stages_dumped, s.files.size(), g.out.c_str());
  if (s.dice) std::printf("dice %.6f\n", *s.dice);
  return kExitOk;
}

int cmd_selfcheck(const Globals& g, double perturb, int trials) {
  app::SelfcheckOptions o;
  if (g.seed) o.seed = *g.seed;
  o.grad_perturbation = perturb;
  o.grad_trials = trials;
  const auto results = app::run_selfcheck(o);
  std::cout << app::format_report(results);
  return app::all_passed(results) ? kExitOk : kExitSelfcheck;
}

int cmd_grad_check(const Globals& g, const std::string& op, int trials) {
  const std::uint64_t seed = g.seed.value_or(1);
  const std::vector<std::string> ops = op == "all" ? training::grad_check_ops() : std::vector<std::string>{op};
  bool ok = true;
  for (const std::string& name : ops) {
    const auto r = training::grad_check(name, trials, seed);
    const bool pass = r.max_rel_error <= 1e-4;
    ok = ok && pass;
    std::printf("%-5s %-18s max_rel_err %.3e  probes %zu  non-smooth %zu  below-resolution %zu  worst %s\n",
                pass ? "PASS" : "FAIL", name.c_str(), r.max_rel_error, r.entries_checked, r.nonsmooth_skipped,
                r.below_resolution, r.worst_entry.c_str());
  }
  return ok ? kExitOk : kExitSelfcheck;
}

int cmd_potts(const Globals& g, const std::string& corpus_dir, int class_id, int support, int query,
              double tv_weight) {
  const app::AppConfig cfg = resolve_config(g);
  const app::Corpus corpus = corpus_for(cfg, corpus_dir);
  const proto::Episode ep = app::make_episode(corpus, class_id, support, query);
  const core::FeatureMap fs_support = solver::intensity_features(ep.support_image);
  const core::ScalarGrid fg = ep.support_mask.as_scalar();
  core::ScalarGrid bg = core::make_scalar(fg.shape());
  for (std::size_t p = 0; p < fg.shape().pixels(); ++p) bg.at(p, 0) = 1.0 - fg.at(p, 0);
  const solver::PrototypePair l{solver::map_pool(fs_support, fg), solver::map_pool(fs_support, bg)};
  const auto r = solver::reference_potts_solve(solver::intensity_features(ep.query_image), l, cfg.model.solver(),
                                               tv_weight);
  const fs::path out(g.out);
  fs::create_directories(out);
  const core::BinaryMask mask = core::binarize(r.u);
  core::write_pgm(out / "potts_mask.pgm", mask);
  core::write_pgm(out / "query_image.pgm", ep.query_image);
  solver::write_energy_csv(out / "energy.csv", r.energy_trace);
  std::printf("%d iterations, final energy %.10g, dice %.6f\n", r.iterations, r.energy_trace.back(),
              core::dice(mask, *ep.query_gt));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Learned Mumford-Shah few-shot segmentation toolkit"};
  cli.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  cli.add_option("--config", g.config, "JSON config with model/train/data/eval sections")->check(CLI::ExistingFile);
  auto* seed_opt = cli.add_option("--seed", seed_value, "seed overriding every config seed");
  cli.add_option("--out", g.out, "output directory");

  std::string corpus_dir, params_dir, op = "all";
  std::vector<std::string> param_dirs;
  bool quiet = false, potts_row = false, baseline_row = false;
  double tv_weight = 0.5, perturb = 0.0;
  int episode = 0, trials = 2, class_id = 0, support = 0, query = 1;

  cli.add_subcommand("gen", "write a synthetic corpus to --out");
  auto* train = cli.add_subcommand("train", "train a model; writes params/, loss_log.csv, config.json");
  train->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  train->add_flag("--quiet", quiet, "no progress lines");
  auto* eval = cli.add_subcommand("eval", "DSC table over the seeded test episodes");
  eval->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  eval->add_option("--params", param_dirs, "trained parameter directories")->check(CLI::ExistingDirectory);
  eval->add_flag("--potts", potts_row, "add the reference Potts solver row");
  eval->add_flag("--baseline", baseline_row, "add the zero-init prototype baseline row");
  eval->add_option("--tv-weight", tv_weight, "TV weight for the Potts row");
  auto* segment = cli.add_subcommand("segment", "dump iterates for one test episode");
  segment->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  segment->add_option("--params", params_dir, "parameter directory (default: fresh init)")
      ->check(CLI::ExistingDirectory);
  segment->add_option("--episode", episode, "test episode index");
  auto* selfcheck = cli.add_subcommand("selfcheck", "run the invariant suite");
  selfcheck->add_option("--perturb-grad", perturb, "offset added to analytic gradients (mutation test)");
  selfcheck->add_option("--trials", trials, "gradient check trials per op")->check(CLI::PositiveNumber);
  auto* grad = cli.add_subcommand("grad-check", "analytic vs central-difference gradients");
  grad->add_option("--op", op, "operation name or 'all'");
  grad->add_option("--trials", trials, "trials")->check(CLI::PositiveNumber);
  auto* potts = cli.add_subcommand("potts", "reference Potts solver on one query image");
  potts->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  potts->add_option("--class", class_id, "class id");
  potts->add_option("--support", support, "support instance index");
  potts->add_option("--query", query, "query instance index");
  potts->add_option("--tv-weight", tv_weight, "TV weight");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (cli.got_subcommand("gen")) return cmd_gen(g);
    if (cli.got_subcommand(train)) return cmd_train(g, corpus_dir, quiet);
    if (cli.got_subcommand(eval)) return cmd_eval(g, corpus_dir, param_dirs, potts_row, tv_weight, baseline_row);
    if (cli.got_subcommand(segment)) return cmd_segment(g, corpus_dir, params_dir, episode);
    if (cli.got_subcommand(selfcheck)) return cmd_selfcheck(g, perturb, trials);
    if (cli.got_subcommand(grad)) return cmd_grad_check(g, op, trials);
    if (cli.got_subcommand(potts)) return cmd_potts(g, corpus_dir, class_id, support, query, tv_weight);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const core::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
