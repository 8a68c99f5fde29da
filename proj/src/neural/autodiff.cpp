#include "lms/neural/autodiff.hpp"

#include <cmath>

namespace lms::nn {

using core::InvalidArgument;

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(count(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != count(shape)) throw InvalidArgument("tensor payload does not match shape " + shape_str());
}

std::size_t Tensor::count(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw InvalidArgument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

const Tensor& Var::value() const { return tape_->value(id_); }

void accumulate(Tensor& into, const Tensor& g) {
  for (std::size_t i = 0; i < into.data.size(); ++i) into.data[i] += g.data[i];
}

Var Tape::leaf(Tensor value, bool requires_grad, std::string name) {
  if (!core::all_finite(value.data))
    throw NumericError("non-finite value in leaf #" + std::to_string(nodes_.size()) + " (" + name + ")");
  Node n;
  n.op = name.empty() ? "leaf" : std::move(name);
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(std::string op, Tensor value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(op), std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(std::string op, Tensor value, const std::vector<Var>& parents, Backward backward) {
  const int id = static_cast<int>(nodes_.size());
  if (!core::all_finite(value.data))
    throw NumericError("non-finite value at node #" + std::to_string(id) + " (" + op + ")");
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const Var& p : parents)
    if (p.valid() && needs_grad(p.id())) n.needs_grad = true;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, id);
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape, 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw InvalidArgument("backward: loss belongs to another tape");
  if (loss.value().size() != 1) throw InvalidArgument("backward: loss must be a single value");
  grad_buffer(loss.id()).data[0] += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    if (!core::all_finite(n.grad.data))
      throw NumericError("non-finite gradient at node #" + std::to_string(id) + " (" + n.op + ")");
    n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.has_grad ? n.grad : Tensor(n.value.shape, 0.0);
}

}  // namespace lms::nn
