#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dlarc/tensor.hpp"

namespace dlarc::nc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter, plus the step count.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Tensor> params);
};

/// One Adam step over `params` using their accumulated gradients (a parameter
/// with no gradient counts as zero). t is incremented before bias correction:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
void adam_update(std::span<Tensor> params, AdamState& state);

/// Same update on raw buffers; `params` and `grads` align with the state's buffers.
void adam_update(std::span<std::vector<double>*> params, std::span<const std::vector<double>> grads,
                 AdamState& state);

}  // namespace dlarc::nc
