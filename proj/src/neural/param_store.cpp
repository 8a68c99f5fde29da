#include "lms/neural/param_store.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lms/core/tensor_io.hpp"

namespace lms::nn {

using core::InvalidArgument;
using core::IoError;

void ParamStore::add(const std::string& id, Tensor value, std::string role) {
  if (id.empty() || id.find('/') != std::string::npos) throw InvalidArgument("invalid parameter id '" + id + "'");
  if (!entries_.emplace(id, Entry{std::move(value), std::move(role)}).second)
    throw InvalidArgument("duplicate parameter id '" + id + "'");
}

const Tensor& ParamStore::get(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + id + "'");
  return it->second.value;
}

Tensor& ParamStore::get_mut(const std::string& id) {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + id + "'");
  return it->second.value;
}

const std::string& ParamStore::role(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + id + "'");
  return it->second.role;
}

std::vector<std::string> ParamStore::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [id, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  for (const auto& [id, e] : entries_) {
    std::vector<std::uint32_t> dims(e.value.shape.begin(), e.value.shape.end());
    core::write_lmt1(dir / (id + ".lmt"), dims, e.value.data);
    manifest[id] = {{"shape", e.value.shape}, {"role", e.role}};
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
}

ParamStore ParamStore::load(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("no manifest.json in " + dir.string());
  const auto manifest = nlohmann::json::parse(is);
  ParamStore store;
  for (const auto& [id, meta] : manifest.items()) {
    core::RawTensor raw = core::read_lmt1(dir / (id + ".lmt"));
    std::vector<int> shape(raw.dims.begin(), raw.dims.end());
    if (shape != meta.at("shape").get<std::vector<int>>())
      throw IoError("parameter '" + id + "' shape disagrees with manifest");
    store.add(id, Tensor(std::move(shape), std::move(raw.data)), meta.at("role").get<std::string>());
  }
  return store;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [id, e] : entries_) {
    auto it = other.entries_.find(id);
    if (it == other.entries_.end() || it->second.role != e.role || it->second.value.shape != e.value.shape ||
        it->second.value.data != e.value.data)
      return false;
  }
  return true;
}

ParamBinding::ParamBinding(Tape& tape, const ParamStore& store, bool requires_grad) : tape_(&tape) {
  for (const auto& [id, e] : store.entries()) vars_.emplace(id, tape.leaf(e.value, requires_grad, id));
}

Var ParamBinding::operator[](const std::string& id) const {
  auto it = vars_.find(id);
  if (it == vars_.end()) throw InvalidArgument("parameter '" + id + "' is not bound");
  return it->second;
}

GradStore ParamBinding::gradients() const {
  GradStore out;
  for (const auto& [id, v] : vars_) out.emplace(id, tape_->grad(v));
  return out;
}

Tensor normal_tensor(std::vector<int> shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  // Box-Muller on raw 64-bit draws; std::normal_distribution is not
  // reproducible across standard library implementations.
  auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  for (std::size_t i = 0; i < t.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double a = 2.0 * 3.14159265358979323846 * uniform();
    t.data[i] = stddev * r * std::cos(a);
    if (i + 1 < t.size()) t.data[i + 1] = stddev * r * std::sin(a);
  }
  return t;
}

}  // namespace lms::nn
