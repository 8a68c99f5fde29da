#include "lms/app/config.hpp"

#include <fstream>
#include <set>

#include "lms/core/tensor_io.hpp"

namespace lms::app {

using core::InvalidArgument;
using nlohmann::json;

namespace {

/// Reads known keys from one section and rejects anything else.
class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw InvalidArgument(std::string("config: '") + name + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (!node_ || std::uncaught_exceptions() > 0) return;
    for (const auto& [key, v] : node_->items())
      if (!used_.count(key)) throw InvalidArgument("config: unknown key '" + name_ + "." + key + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidArgument("config: bad value for '" + name_ + "." + key + "': " + e.what());
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> used_;
};

}  // namespace

void AppConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
  split.validate(data.classes);
  if (eval.episodes_per_class < 1) throw InvalidArgument("config: eval.episodes_per_class must be positive");
  if (eval.threads < 1) throw InvalidArgument("config: eval.threads must be positive");
}

void AppConfig::apply_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
  data.seed = seed;
  eval.seed = seed;
}

AppConfig parse_config(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  for (const auto& [key, v] : j.items())
    if (key != "model" && key != "train" && key != "data" && key != "eval")
      throw InvalidArgument("config: unknown section '" + key + "'");
  AppConfig c;
  {
    Section s(j, "model");
    auto& m = c.model;
    s.get("stages", m.stages);
    s.get("flms_mode", m.flms_mode);
    s.get("use_pdnet", m.use_pdnet);
    s.get("alpha", m.alpha);
    s.get("beta1", m.beta1);
    s.get("beta2", m.beta2);
    s.get("cosine_eps", m.cosine_eps);
    s.get("n_p", m.n_p);
    s.get("channels", m.backbone.channels);
    s.get("backbone_width1", m.backbone.width1);
    s.get("backbone_width2", m.backbone.width2);
    s.get("md_hidden", m.md_hidden);
    std::string variant = nn::to_string(m.md_variant);
    s.get("md_variant", variant);
    m.md_variant = nn::parse_md_variant(variant);
    s.get("mut_heads", m.mut.heads);
    s.get("mut_mlp_ratio", m.mut.mlp_ratio);
    s.get("share_md", m.share_md);
    s.get("share_mut", m.share_mut);
    s.get("upsample_loss", m.upsample_loss);
    s.get("seed", m.seed);
  }
  {
    Section s(j, "train");
    auto& t = c.train;
    s.get("total_iterations", t.total_iterations);
    s.get("learning_rate", t.learning_rate);
    s.get("decay_factor", t.decay_factor);
    s.get("decay_every", t.decay_every);
    s.get("batch_size", t.batch_size);
    s.get("checkpoint_every", t.checkpoint_every);
    s.get("seed", t.seed);
  }
  {
    Section s(j, "data");
    auto& d = c.data;
    s.get("height", d.height);
    s.get("width", d.width);
    s.get("classes", d.classes);
    s.get("instances_per_class", d.instances_per_class);
    s.get("background", d.background);
    s.get("contrast", d.contrast);
    s.get("shading", d.shading);
    s.get("noise_sigma", d.noise_sigma);
    s.get("deformation", d.deformation);
    s.get("seed", d.seed);
    s.get("train_classes", c.split.train_classes);
    s.get("test_classes", c.split.test_classes);
  }
  {
    Section s(j, "eval");
    s.get("episodes_per_class", c.eval.episodes_per_class);
    s.get("threads", c.eval.threads);
    s.get("seed", c.eval.seed);
  }
  c.validate();
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw core::IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config: " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

nlohmann::ordered_json to_json(const AppConfig& c) {
  nlohmann::ordered_json j;
  const auto& m = c.model;
  j["model"] = {{"stages", m.stages},
                {"flms_mode", m.flms_mode},
                {"use_pdnet", m.use_pdnet},
                {"alpha", m.alpha},
                {"beta1", m.beta1},
                {"beta2", m.beta2},
                {"cosine_eps", m.cosine_eps},
                {"n_p", m.n_p},
                {"channels", m.backbone.channels},
                {"backbone_width1", m.backbone.width1},
                {"backbone_width2", m.backbone.width2},
                {"md_hidden", m.md_hidden},
                {"md_variant", nn::to_string(m.md_variant)},
                {"mut_heads", m.mut.heads},
                {"mut_mlp_ratio", m.mut.mlp_ratio},
                {"share_md", m.share_md},
                {"share_mut", m.share_mut},
                {"upsample_loss", m.upsample_loss},
                {"seed", m.seed}};
  const auto& t = c.train;
  j["train"] = {{"total_iterations", t.total_iterations}, {"learning_rate", t.learning_rate},
                {"decay_factor", t.decay_factor},         {"decay_every", t.decay_every},
                {"batch_size", t.batch_size},             {"checkpoint_every", t.checkpoint_every},
                {"seed", t.seed}};
  const auto& d = c.data;
  j["data"] = {{"height", d.height},
               {"width", d.width},
               {"classes", d.classes},
               {"instances_per_class", d.instances_per_class},
               {"background", d.background},
               {"contrast", d.contrast},
               {"shading", d.shading},
               {"noise_sigma", d.noise_sigma},
               {"deformation", d.deformation},
               {"seed", d.seed},
               {"train_classes", c.split.train_classes},
               {"test_classes", c.split.test_classes}};
  j["eval"] = {{"episodes_per_class", c.eval.episodes_per_class},
               {"threads", c.eval.threads},
               {"seed", c.eval.seed}};
  return j;
}

}  // namespace lms::app
