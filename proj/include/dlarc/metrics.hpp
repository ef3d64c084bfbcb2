#pragma once

// Confusion matrices and the usual per-class / macro classification scores.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlarc/ingest.hpp"

namespace dlarc::eval {

/// counts[t * K + p] = number of windows of true class t predicted as p.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::size_t> counts;

  std::size_t classes() const { return class_names.size(); }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes() + pred]; }
  std::size_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const ingest::ClassId> truth, std::span<const ingest::ClassId> pred,
                                 const ingest::LabelMap& labels);
/// Classes named class_0 .. class_{k-1}.
ConfusionMatrix confusion_matrix(std::span<const ingest::ClassId> truth, std::span<const ingest::ClassId> pred,
                                 std::size_t k);

struct MetricsReport {
  std::vector<std::string> class_names;
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::size_t> support;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Any 0/0 ratio is 0. Macro scores average over classes with truth support.
/// Throws DataError on an empty matrix.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

nlohmann::ordered_json to_json(const MetricsReport& report);
nlohmann::ordered_json to_json(const ConfusionMatrix& cm);

/// Header row and first column hold class names; rows are truth, columns predictions.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace dlarc::eval
