#pragma once

// Mini-batch training: seeded shuffling, label smoothing, optional MaxUp over
// jitter/scale augmentations, Adam updates, and per-epoch history.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlarc/adam.hpp"
#include "dlarc/model.hpp"
#include "dlarc/preprocess.hpp"
#include "dlarc/rng.hpp"

namespace dlarc::train {

struct AugmentParams {
  double jitter_sigma = 0.05;
  double scale_sigma = 0.1;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 64;
  nc::AdamConfig adam;
  double label_smoothing = 0.0;
  std::size_t maxup = 0;  // 0 disables MaxUp
  AugmentParams augment;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; `seed` is not read.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  /// Accuracy of the predictions made on the unaugmented windows while the
  /// epoch was running.
  double train_acc = 0.0;
  /// Smallest batch loss seen during the epoch.
  double min_batch_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
  std::optional<double> val_macro_f1;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// epoch,train_loss,train_acc,val_loss,val_acc,val_macro_f1
std::string history_csv(const TrainHistory& history);

/// (1 - eps) + eps/K at the true class, eps/K elsewhere.
std::vector<double> smooth_labels(ingest::ClassId class_id, std::size_t k, double eps);

/// Entropy of the smoothed target, the floor of the smoothed cross-entropy.
double smoothed_target_entropy(std::size_t k, double eps);

enum class AugmentKind { jitter, scale };

/// `window` is W x C. Jitter adds N(0, sigma) per element; scale multiplies
/// each channel by a factor drawn from N(1, sigma_s).
std::vector<double> augment(std::span<const double> window, std::size_t channels, AugmentKind kind,
                            const AugmentParams& params, Rng& rng);

/// m copies of a window: the first is the window itself, each later one is a
/// scale then a jitter augmentation, drawn in order from `rng`. The copies for
/// m are a prefix of the copies for m + 1 given the same stream state.
std::vector<std::vector<double>> maxup_copies(std::span<const double> window, std::size_t channels, std::size_t m,
                                              const AugmentParams& params, Rng& rng);

/// Maximum softmax cross-entropy over the m copies of one window; gradients
/// flow through the worst copy only (ties go to the lowest copy index).
nc::Tensor maxup_loss(const model::Model& model, std::span<const double> window, std::span<const double> target,
                      std::size_t m, const AugmentParams& params, Rng& rng);

/// Batch form: the mean over windows of each window's MaxUp loss. `windows`
/// holds B windows back to back, `targets` B rows of K. Copies are drawn
/// window by window. When `clean_logits` is given it receives the logits of
/// the unaugmented copies.
nc::Tensor maxup_batch_loss(const model::Model& model, std::span<const double> windows,
                            std::span<const double> targets, std::size_t m, const AugmentParams& params, Rng& rng,
                            std::vector<double>* clean_logits = nullptr);

/// Trains `model` in place. Validation metrics (if `val` is given) use the
/// unaugmented windows and one-hot targets.
TrainHistory train(model::Model& model, const preprocess::WindowedDataset& train_set,
                   const preprocess::WindowedDataset* val, const TrainConfig& cfg);

}  // namespace dlarc::train
