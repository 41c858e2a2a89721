#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wcgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when no gradient is held
  bool requires_grad = false;
  bool is_leaf = true;
};
}  // namespace detail

/// Dense row-major tensor of 64-bit reals.
///
/// A Tensor is a handle: copies share storage, which is what lets a network
/// parameter appear both in its owning Network and in the nodes of a Graph.
/// Use clone() for an independent deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  // Leaves only. Turning it on allocates a zeroed gradient buffer.
  void set_requires_grad(bool on);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Handle semantics: these mutate the shared storage.
  std::span<double> mutable_grad() const { return impl_->grad; }
  void zero_grad();
  void accumulate_grad(std::span<const double> g) const;

  Tensor clone() const;
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

  // Internal: used by ops to create graph outputs.
  static Tensor make_intermediate(Shape shape, std::vector<double> values, bool requires_grad);
  void clear_grad_storage() { impl_->grad.clear(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorData> impl_;
};

/// Bitwise equality of shape and values.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// Record of forward operations for one reverse sweep.
///
/// Nodes are appended in execution order, so every node's inputs precede it.
/// A Graph is confined to one thread at a time.
class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  // Registers an op. Returns false (and records nothing) when no input needs
  // a gradient.
  bool record(std::string op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn backward);

  // Reverse sweep from a scalar loss. Intermediate gradients are recomputed
  // each call; leaf gradients accumulate across calls until zero_grad().
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

inline void backward(Graph& graph, const Tensor& loss) { graph.backward(loss); }

}  // namespace wcgan
