#include "deep2bsde/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "deep2bsde/errors.hpp"

namespace deep2bsde {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  if (shape_.size() > kMaxRank) throw DimensionError("tensor rank exceeds 4: " + shape_string(shape_));
  data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > kMaxRank) throw DimensionError("tensor rank exceeds 4: " + shape_string(shape_));
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw DimensionError("index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("Var is not bound to a tape");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<NodeId> parents, BackwardFn backward) {
  bool needs = false;
  for (NodeId p : parents) {
    if (p >= nodes_.size()) throw UsageError("parent node recorded after child");
    needs = needs || nodes_[p].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, std::move(parents), needs ? std::move(backward) : BackwardFn{}, needs});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::accumulate(NodeId id) {
  Node& node = nodes_.at(id);
  if (node.grad.empty()) node.grad.assign(node.value.numel(), 0.0);
  return node.grad;
}

std::span<const double> Tape::grad(NodeId id) const {
  const Node& node = nodes_.at(id);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw UsageError("loss belongs to a different tape");
  if (value(loss.id()).numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_string(value(loss.id()).shape()));
  }
  for (Node& node : nodes_) node.grad.clear();
  accumulate(loss.id())[0] = 1.0;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, id);
  }
}

Tensor Tape::gradient(Var var) const {
  const Node& node = nodes_.at(var.id());
  if (node.grad.empty()) return Tensor(node.value.shape());
  return Tensor(node.value.shape(), node.grad);
}

}  // namespace deep2bsde
