#pragma once

// The JSON run configuration shared by every command.
//
// {
//   "seed": 0,
//   "data": {"source": "synthetic" | "directory", "directory": "...", "labels": [...],
//            "synthetic": {"subjects", "classes", "rate", "bout_seconds", "bouts_per_class", "channels"}},
//   "preprocess": {"target_rate", "window_seconds", "overlap", "normalization", "labeling"},
//   "model": {"conv_layers", "filters", "kernel", "hidden", "lstm_layers"},
//   "train": {"epochs", "batch", "lr", "beta1", "beta2", "eps", "label_smoothing", "maxup",
//             "jitter_sigma", "scale_sigma"},
//   "validation": {"protocol", "k", "val_fraction", "grouping"},
//   "search": {"budget", "lr_min", "lr_max", "batch", "filters", "hidden", "label_smoothing", "maxup"}
// }
//
// Every key is optional; unknown keys are rejected. A run manifest
// ({"command": ..., "config": {...}}) is accepted wherever a config is.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlarc/ingest.hpp"
#include "dlarc/model.hpp"
#include "dlarc/preprocess.hpp"
#include "dlarc/train.hpp"
#include "dlarc/validate.hpp"

namespace dlarc::cli {

struct DataConfig {
  bool use_synthetic = true;
  std::string directory;
  /// Class names; empty means the RWHAR names (first `synthetic.classes` of
  /// them for synthetic data).
  std::vector<std::string> labels;
  ingest::SyntheticSpec synthetic;
};

struct PreprocessConfig {
  double target_rate = 50.0;
  double window_seconds = 1.0;
  double overlap = 0.5;
  preprocess::NormScheme normalization = preprocess::NormScheme::zscore;
  preprocess::Labeling labeling = preprocess::Labeling::majority;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  PreprocessConfig preprocess;
  /// Only the architecture fields are configurable; channels, window, classes
  /// and seed are derived at run time.
  model::ModelSpec model;
  train::TrainConfig train;
  validate::ProtocolConfig validation;
  validate::SearchSpace search;

  /// Throws ConfigError.
  void validate() const;

  ingest::LabelMap label_map() const;
  /// round(window_seconds * target_rate)
  std::size_t window_samples() const;
  /// max(1, round(window_samples * (1 - overlap)))
  std::size_t stride_samples() const;
};

/// Missing keys keep their defaults. Accepts a run manifest too.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field, defaults materialized.
nlohmann::ordered_json to_json(const RunConfig& cfg);

}  // namespace dlarc::cli
