#pragma once

// Split strategies (hold-out, k-fold over windows, leave-one-subject-out),
// the cross-validation driver and random-search hypertuning.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlarc/metrics.hpp"
#include "dlarc/model.hpp"
#include "dlarc/preprocess.hpp"
#include "dlarc/train.hpp"

namespace dlarc::validate {

enum class Grouping { window, subject };
enum class Protocol { holdout, kfold, loso };

std::string to_string(Grouping g);
std::string to_string(Protocol p);
Grouping parse_grouping(const std::string& s);
Protocol parse_protocol(const std::string& s);

struct FoldSpec {
  std::string id;
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
  std::optional<std::string> held_out_subject;
};

/// Window grouping shuffles windows and cuts off round(val_fraction * N) of
/// them (at least one on each side). Subject grouping shuffles the subjects
/// and moves whole subjects to the validation side until it holds at least
/// val_fraction of the windows, always leaving one subject for training.
FoldSpec split_train_val(const preprocess::WindowedDataset& ds, double val_fraction, std::uint64_t seed,
                         Grouping grouping);

/// A seeded permutation cut into k contiguous chunks, larger chunks first.
std::vector<FoldSpec> kfold(std::size_t n, std::size_t k, std::uint64_t seed);

/// One fold per subject, in sorted subject order.
std::vector<FoldSpec> loso(const preprocess::WindowedDataset& ds);

struct ProtocolConfig {
  Protocol protocol = Protocol::holdout;
  std::size_t k = 5;
  double val_fraction = 0.2;
  Grouping grouping = Grouping::subject;
};

/// The folds a protocol produces on `ds`.
std::vector<FoldSpec> make_folds(const preprocess::WindowedDataset& ds, const ProtocolConfig& protocol,
                                 std::uint64_t seed);

struct FoldResult {
  std::string id;
  std::optional<std::string> held_out_subject;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
  preprocess::NormStats norm;
  train::TrainHistory history;
  eval::ConfusionMatrix confusion;
  eval::MetricsReport metrics;
};

struct CrossValReport {
  Protocol protocol = Protocol::holdout;
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_macro_f1 = 0.0;
  double std_macro_f1 = 0.0;
};

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

/// Seed used for the model and training of one fold.
std::uint64_t fold_seed(std::uint64_t master, const std::string& fold_id);

/// Trains and evaluates one model per fold. `ds` holds unnormalized windows;
/// each fold fits its normalizer on its own training windows. The model's
/// channels, window and classes are taken from the dataset.
CrossValReport run_cross_validation(const preprocess::WindowedDataset& ds, preprocess::NormScheme scheme,
                                    const model::ModelSpec& model_spec, const train::TrainConfig& train_cfg,
                                    const ProtocolConfig& protocol, std::uint64_t seed);

nlohmann::ordered_json to_json(const CrossValReport& report);

struct SearchSpace {
  std::size_t budget = 4;
  double lr_min = 1e-4;
  double lr_max = 1e-2;
  std::vector<std::size_t> batch{32, 64};
  std::vector<std::size_t> filters{32, 64};
  std::vector<std::size_t> hidden{64, 128};
  std::vector<double> label_smoothing{0.0, 0.1};
  std::vector<std::size_t> maxup{0};

  /// Throws ConfigError on an empty or invalid range.
  void validate() const;
};

nlohmann::ordered_json to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace base = {});

struct Trial {
  std::size_t index = 0;
  double lr = 0.0;
  std::size_t batch = 0;
  std::size_t filters = 0;
  std::size_t hidden = 0;
  double label_smoothing = 0.0;
  std::size_t maxup = 0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
};

struct SearchResult {
  std::vector<Trial> trials;
  std::size_t best = 0;  // index into trials; earliest among equal scores
  model::ModelSpec best_model;
  train::TrainConfig best_train;
};

/// Each trial samples lr log-uniformly and every other field uniformly, then
/// trains on one fixed split_train_val split and scores validation macro-F1.
SearchResult random_search(const preprocess::WindowedDataset& ds, preprocess::NormScheme scheme,
                           const model::ModelSpec& base_model, const train::TrainConfig& base_train,
                           const SearchSpace& space, double val_fraction, Grouping grouping, std::uint64_t seed);

/// trial,lr,batch,filters,hidden,label_smoothing,maxup,val_accuracy,val_macro_f1,best
std::string trials_csv(const SearchResult& result);

}  // namespace dlarc::validate
