#include "dlarc/metrics.hpp"

#include <numeric>

#include "dlarc/error.hpp"

namespace dlarc::eval {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::vector<std::string> generic_names(std::size_t k) {
  std::vector<std::string> names;
  names.reserve(k);
  for (std::size_t i = 0; i < k; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

ConfusionMatrix tally(std::span<const ingest::ClassId> truth, std::span<const ingest::ClassId> pred,
                      std::vector<std::string> names) {
  if (truth.size() != pred.size()) {
    throw DataError("confusion_matrix: " + std::to_string(truth.size()) + " truth labels vs " +
                    std::to_string(pred.size()) + " predictions");
  }
  const std::size_t k = names.size();
  ConfusionMatrix cm{std::move(names), std::vector<std::size_t>(k * k, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = truth[i], p = pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
      throw DataError("confusion_matrix: class id out of range at position " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(t) * k + static_cast<std::size_t>(p)];
  }
  return cm;
}

}  // namespace

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ConfusionMatrix confusion_matrix(std::span<const ingest::ClassId> truth, std::span<const ingest::ClassId> pred,
                                 const ingest::LabelMap& labels) {
  return tally(truth, pred, labels.names());
}

ConfusionMatrix confusion_matrix(std::span<const ingest::ClassId> truth, std::span<const ingest::ClassId> pred,
                                 std::size_t k) {
  return tally(truth, pred, generic_names(k));
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  if (cm.counts.size() != k * k) throw DataError("compute_metrics: matrix is not K x K");
  const std::size_t total = cm.total();
  if (total == 0) throw DataError("compute_metrics: empty confusion matrix");

  MetricsReport r;
  r.class_names = cm.class_names;
  r.precision.resize(k);
  r.recall.resize(k);
  r.f1.resize(k);
  r.support.resize(k);
  std::size_t trace = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const auto tp = static_cast<double>(cm.at(c, c));
    trace += cm.at(c, c);
    r.support[c] = row;
    r.precision[c] = ratio(tp, static_cast<double>(col));
    r.recall[c] = ratio(tp, static_cast<double>(row));
    r.f1[c] = ratio(2.0 * r.precision[c] * r.recall[c], r.precision[c] + r.recall[c]);
    if (row > 0) {
      ++present;
      r.macro_precision += r.precision[c];
      r.macro_recall += r.recall[c];
      r.macro_f1 += r.f1[c];
    }
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  r.macro_precision /= static_cast<double>(present);
  r.macro_recall /= static_cast<double>(present);
  r.macro_f1 /= static_cast<double>(present);
  return r;
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["macro_precision"] = report.macro_precision;
  j["macro_recall"] = report.macro_recall;
  j["macro_f1"] = report.macro_f1;
  auto& per = j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < report.class_names.size(); ++c) {
    per.push_back({{"class", report.class_names[c]},
                   {"precision", report.precision[c]},
                   {"recall", report.recall[c]},
                   {"f1", report.f1[c]},
                   {"support", report.support[c]}});
  }
  return j;
}

nlohmann::ordered_json to_json(const ConfusionMatrix& cm) {
  nlohmann::ordered_json j;
  j["classes"] = cm.class_names;
  auto& rows = j["counts"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    std::vector<std::size_t> row(cm.counts.begin() + static_cast<std::ptrdiff_t>(t * cm.classes()),
                                 cm.counts.begin() + static_cast<std::ptrdiff_t>((t + 1) * cm.classes()));
    rows.push_back(row);
  }
  return j;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "truth\\pred";
  for (const auto& n : cm.class_names) out += "," + n;
  out += "\n";
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    out += cm.class_names[t];
    for (std::size_t p = 0; p < cm.classes(); ++p) out += "," + std::to_string(cm.at(t, p));
    out += "\n";
  }
  return out;
}

}  // namespace dlarc::eval
