#include "dlarc/adam.hpp"

#include <cmath>

#include "dlarc/error.hpp"

namespace dlarc::nc {

AdamState::AdamState(AdamConfig cfg, std::span<const Tensor> params) : config(cfg) {
  for (const auto& p : params) {
    m.emplace_back(p.numel(), 0.0);
    v.emplace_back(p.numel(), 0.0);
  }
}

namespace {

void step_one(std::span<double> p, std::span<const double> g, std::vector<double>& m, std::vector<double>& v,
              const AdamConfig& c, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g.empty() ? 0.0 : g[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

}  // namespace

void adam_update(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.m.size()) throw ShapeError("adam: parameter count does not match state");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].numel() != state.m[k].size()) throw ShapeError("adam: parameter shape does not match state");
  }
  ++state.t;
  const auto t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(state.config.beta1, t);
  const double bc2 = 1.0 - std::pow(state.config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    step_one(params[k].mutable_values(), params[k].grad_view(), state.m[k], state.v[k], state.config, bc1, bc2);
  }
}

void adam_update(std::span<std::vector<double>*> params, std::span<const std::vector<double>> grads,
                 AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam: parameter/gradient/state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->size() != grads[k].size() || params[k]->size() != state.m[k].size()) {
      throw ShapeError("adam: buffer " + std::to_string(k) + " shape mismatch");
    }
  }
  ++state.t;
  const auto t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(state.config.beta1, t);
  const double bc2 = 1.0 - std::pow(state.config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    step_one(*params[k], grads[k], state.m[k], state.v[k], state.config, bc1, bc2);
  }
}

}  // namespace dlarc::nc
