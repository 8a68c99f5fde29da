#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "lms/core/grid.hpp"

namespace lms::nn {

using core::NumericError;

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static std::size_t count(const std::vector<int>& s);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  double item() const { return data.at(0); }
  std::string shape_str() const;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const std::vector<int>& shape() const { return value().shape; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records a computation for one forward pass and replays it in reverse.
/// Each call site owns its tape; nothing is shared between tapes.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Var leaf(Tensor value, bool requires_grad = true, std::string name = {});
  Var constant(Tensor value) { return leaf(std::move(value), false, "const"); }

  /// Adds an op node. Throws NumericError naming the node if the value is
  /// not finite.
  Var record(std::string op, Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(std::string op, Tensor value, const std::vector<Var>& parents, Backward backward);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  bool needs_grad(const Var& v) const { return needs_grad(v.id()); }
  /// Zero-initialized on first access.
  Tensor& grad_buffer(int id);

  /// Reverse sweep from a single-element loss.
  void backward(const Var& loss);
  /// Gradient w.r.t. v after backward(); zeros when v was not reached.
  Tensor grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

void accumulate(Tensor& into, const Tensor& g);

}  // namespace lms::nn
