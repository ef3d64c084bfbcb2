#include "dlarc/tensor.hpp"

#include <unordered_set>

#include "dlarc/error.hpp"

namespace dlarc::nc {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& TensorData::grad_buffer() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, bool requires_grad) : data_(std::make_shared<TensorData>()) {
  data_->values.assign(nc::numel(shape), 0.0);
  data_->shape = std::move(shape);
  data_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) : data_(std::make_shared<TensorData>()) {
  if (values.size() != nc::numel(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " + to_string(shape));
  }
  data_->shape = std::move(shape);
  data_->values = std::move(values);
  data_->requires_grad = requires_grad;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!t_grad_enabled) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  auto node = std::make_shared<Node>();
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.data_);
  node->backward = std::move(backward);
  out.data_->requires_grad = true;
  out.data_->node = std::move(node);
  return out;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return data_->values[0];
}

std::vector<double> Tensor::grad() const {
  if (data_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return data_->grad;
}

Tensor Tensor::detach() const { return Tensor(shape(), data_->values); }

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() needs a scalar, got shape " + to_string(shape()));
  if (!requires_grad()) throw Error("backward() on a tensor that does not require gradients");
  if (data_->node && data_->node->released) throw Error("backward() called twice on the same graph");

  // Iterative post-order DFS; reversing it gives a valid reverse topological order.
  std::vector<TensorData*> order;
  std::unordered_set<TensorData*> seen;
  std::vector<std::pair<TensorData*, std::size_t>> stack;
  stack.emplace_back(data_.get(), 0);
  seen.insert(data_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const bool expandable = t->node && !t->node->released;
    if (expandable && next < t->node->inputs.size()) {
      TensorData* child = t->node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  data_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorData* t = *it;
    if (t->node && !t->node->released && !t->grad.empty()) t->node->backward(*t);
  }
  for (TensorData* t : order) {
    if (t->node && !t->node->released) {
      t->node->released = true;
      t->node->inputs.clear();
      t->node->backward = nullptr;
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

}  // namespace dlarc::nc
