#pragma once

// Reverse-mode automatic differentiation over dense row-major float64 arrays.
//
// A Tensor is a shared handle. Operations on tensors that require gradients
// record a Node holding the inputs and a backward rule; backward() on a scalar
// walks that graph once in reverse topological order, accumulating (+=) into
// the grad buffer of every tensor that requires gradients, then releases the
// graph. Calling backward() a second time on the same graph is an error.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dlarc::nc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorData;

/// Reads `out.grad` and accumulates into the grads of the node's inputs.
using BackwardFn = std::function<void(const TensorData& out)>;

struct Node {
  std::vector<std::shared_ptr<TensorData>> inputs;
  BackwardFn backward;
  bool released = false;
};

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  /// Grad buffer, zero-filled on first use.
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  /// Result of an operation. A node is recorded only when some input requires
  /// gradients and gradient recording is enabled.
  static Tensor from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t dim(std::size_t i) const { return data_->shape.at(i); }
  std::size_t numel() const { return data_->values.size(); }

  std::span<const double> values() const { return data_->values; }
  std::span<double> mutable_values() { return data_->values; }
  double item() const;

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }
  bool has_grad() const { return !data_->grad.empty(); }
  /// Gradient; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<const double> grad_view() const { return data_->grad; }
  void zero_grad() { data_->grad.clear(); }

  bool is_leaf() const { return data_->node == nullptr; }

  /// Requires a scalar tensor on an unreleased graph.
  void backward() const;

  /// Same values, no graph, no grad.
  Tensor detach() const;

  const std::shared_ptr<TensorData>& data() const { return data_; }

 private:
  std::shared_ptr<TensorData> data_;
};

/// While alive, operations on this thread do not record graph nodes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace dlarc::nc
