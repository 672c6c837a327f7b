#pragma once

// Dense tensors and the reverse-mode tape.
//
// A Tensor is a plain value: a shape (rank <= 4) plus contiguous row-major
// doubles. A Var is a handle to a node recorded on a Tape; the tape owns the
// forward value of every node and, after backward(), its gradient.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deep2bsde {

using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 4;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  /// Same data, different shape; numel must match.
  Tensor reshaped(Shape shape) const;

  /// Scalar value of a one-element tensor.
  double item() const;

  bool all_finite() const noexcept;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

class Tape;
using NodeId = std::size_t;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  NodeId id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  /// Called once per node during backward with the node's own id. It reads
  /// grad(self) and accumulates into its parents through accumulate().
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives a gradient.
  Var constant(Tensor value);
  /// Trainable leaf; gradients are kept for it.
  Var leaf(Tensor value);
  /// Records an operation result. The node requires a gradient iff any parent does.
  Var record(Tensor value, std::vector<NodeId> parents, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of `id`, allocated (zeroed) on first use.
  std::span<double> accumulate(NodeId id);
  /// Gradient of `id` accumulated so far (zeros if none).
  std::span<const double> grad(NodeId id) const;

  /// Populates d(loss)/d(node) for every node reachable from `loss`.
  /// `loss` must hold exactly one element.
  void backward(Var loss);

  /// d(loss)/d(var) after backward(); zeros if var does not influence loss.
  Tensor gradient(Var var) const;

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<NodeId> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace deep2bsde
