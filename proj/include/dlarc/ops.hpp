#pragma once

// Differentiable primitives. Every function validates shapes (ShapeError) and
// records its backward rule when an input requires gradients.
//
// Forward kernels fix the summation order of each output element so that a
// row's result never depends on the other rows of the batch.

#include <cstddef>
#include <span>
#include <vector>

#include "dlarc/tensor.hpp"

namespace dlarc::nc {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor logistic(const Tensor& a);
Tensor relu(const Tensor& a);

/// Sum of all elements, as a scalar.
Tensor sum(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Swaps two axes.
Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1);
/// Keeps indices [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Picks one index along `axis` and drops that axis.
Tensor select(const Tensor& a, std::size_t axis, std::size_t index);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

/// Valid, stride-1 cross-correlation along axis 2 of [B, F_in, T, C] with
/// kernels [F_out, F_in, K, 1]:
///   out[b,f,t,c] = bias[f] + sum_{g,k} in[b,g,t+k,c] * kernels[f,g,k,0]
Tensor conv_temporal(const Tensor& input, const Tensor& kernels, const Tensor& bias);

/// input [B, D], weight [K, D], bias [K] -> [B, K]
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// LSTM weights; the 4H axis is ordered (input, forget, candidate, output).
struct LstmParams {
  Tensor w_ih;  // [4H, D]
  Tensor w_hh;  // [4H, H]
  Tensor bias;  // [4H]
};

struct LstmState {
  Tensor h;  // [B, H]
  Tensor c;  // [B, H]
};

/// x W_ih^T + h W_hh^T + b -> [B, 4H]
Tensor lstm_preactivation(const Tensor& x, const Tensor& h, const LstmParams& p);
/// c' = logistic(f) * c + logistic(i) * tanh(g)
Tensor lstm_cell_state(const Tensor& preact, const Tensor& c);
/// h' = logistic(o) * tanh(c')
Tensor lstm_hidden(const Tensor& preact, const Tensor& c_next);

/// One LSTM step, composed from the three operations above.
LstmState lstm_step(const Tensor& x, const LstmState& state, const LstmParams& p);

/// Mean over the batch of -sum_k target * log softmax(logits), computed in the
/// log-sum-exp stabilized form. Target rows must be distributions.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target);

/// Cross-entropy of a single row; the same arithmetic softmax_cross_entropy uses per row.
double cross_entropy_row(std::span<const double> logits, std::span<const double> target);

/// Row-wise softmax of a [rows, k] buffer.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t k);

}  // namespace dlarc::nc
