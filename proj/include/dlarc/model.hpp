#pragma once

// The altered DeepConvLSTM: L temporal convolutions (ReLU) over [B, 1, W, C],
// a single-layer LSTM over the remaining W - L(K-1) steps, and a dense head on
// the final hidden state.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlarc/param_io.hpp"
#include "dlarc/tensor.hpp"

namespace dlarc::model {

struct ModelSpec {
  std::size_t channels = 3;
  std::size_t window = 50;
  std::size_t classes = 8;
  std::size_t conv_layers = 4;
  std::size_t filters = 64;
  std::size_t kernel = 5;
  std::size_t hidden = 128;
  std::size_t lstm_layers = 1;
  std::uint64_t seed = 0;

  /// Length of the sequence the LSTM sees.
  std::size_t lstm_steps() const { return window - conv_layers * (kernel - 1); }
  /// Throws ConfigError unless every count is >= 1 and the window survives the convolutions.
  void validate() const;
};

/// Closed-form parameter count.
std::size_t parameter_count(const ModelSpec& spec);

nlohmann::ordered_json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

class Model {
 public:
  /// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
  explicit Model(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<nc::NamedTensor>& named_parameters() const { return params_; }
  std::vector<nc::Tensor> parameters() const;
  /// Sum of all parameter buffer sizes.
  std::size_t buffer_size() const;

  /// batch [B, W, C] -> logits [B, K]
  nc::Tensor forward(const nc::Tensor& batch) const;

  /// Deep copy with independent parameter buffers.
  Model clone() const;

  /// Replaces parameter values; names and shapes must match exactly.
  void load(const std::vector<nc::NamedTensor>& params);

  void zero_grad();

 private:
  ModelSpec spec_;
  std::vector<nc::NamedTensor> params_;
};

/// Argmax per row, ties to the smaller class id.
std::vector<int> argmax_rows(std::span<const double> logits, std::size_t k);

/// Inference without graph recording.
std::vector<int> predict(const Model& model, const nc::Tensor& batch);

/// Logits for windows stored back to back ([n, W, C]), evaluated in chunks of
/// `batch` without recording a graph.
std::vector<double> infer_logits(const Model& model, std::span<const double> windows, std::size_t batch = 256);

}  // namespace dlarc::model
