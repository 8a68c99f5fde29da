#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lms/neural/autodiff.hpp"

namespace lms::nn {

/// Named trainable tensors. Iteration order is the lexicographic order of
/// identifiers, which keeps serialization and updates deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    std::string role;
  };

  void add(const std::string& id, Tensor value, std::string role);
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  const Tensor& get(const std::string& id) const;
  Tensor& get_mut(const std::string& id);
  const std::string& role(const std::string& id) const;
  std::vector<std::string> ids() const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::size_t scalar_count() const;

  /// Directory of <id>.lmt files plus manifest.json (id -> shape, role).
  void save(const std::filesystem::path& dir) const;
  static ParamStore load(const std::filesystem::path& dir);

  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Entry> entries_;
};

using GradStore = std::map<std::string, Tensor>;

/// Binds every parameter of a store as a leaf on a tape.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store, bool requires_grad);

  Var operator[](const std::string& id) const;
  bool contains(const std::string& id) const { return vars_.count(id) != 0; }
  Tape& tape() const { return *tape_; }

  /// Gradients for every parameter; unreached parameters get zeros.
  GradStore gradients() const;

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

/// Seeded initializers.
Tensor normal_tensor(std::vector<int> shape, double stddev, std::mt19937_64& rng);

}  // namespace lms::nn
