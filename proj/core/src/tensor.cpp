#include "wcgan/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "wcgan/error.hpp"

namespace wcgan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<detail::TensorData>()) {
  impl_->shape = {0};
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorData>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::make_intermediate(Shape shape, std::vector<double> values, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorData>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  impl->is_leaf = false;
  return Tensor(std::move(impl));
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!impl_->is_leaf) throw ContractError("requires_grad can only be toggled on leaf tensors");
  impl_->requires_grad = on;
  if (on && impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (impl_->grad.empty()) {
    if (impl_->requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
    return;
  }
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) const {
  if (g.size() != impl_->data.size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) + " for tensor " + shape_to_string(shape()));
  }
  if (impl_->grad.empty()) {
    impl_->grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorData>(*impl_);
  impl->is_leaf = true;
  return Tensor(std::move(impl));
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

bool Tensor::all_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

bool Graph::record(std::string op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn backward) {
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return false;
  nodes_.push_back(Node{std::move(op), std::move(inputs), output, std::move(backward)});
  return true;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  std::size_t end = 0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].output.same_storage(loss)) {
      end = i + 1;
      break;
    }
  }
  if (end == 0) throw ContractError("loss is not an output of this graph");
  for (auto& n : nodes_) n.output.clear_grad_storage();

  Tensor seed = loss;
  const double one = 1.0;
  seed.accumulate_grad(std::span<const double>(&one, 1));
  for (std::size_t i = end; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.output.has_grad()) continue;
    node.backward(node.output.grad());
  }
}

}  // namespace wcgan
