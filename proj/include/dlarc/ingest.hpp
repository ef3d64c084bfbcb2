#pragma once

// Sensor recordings: canonical in-memory form, CSV loader/writer, a synthetic
// generator that stands in for a real corpus, and dataset summaries.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace dlarc::ingest {

using ClassId = int;

/// Bijection between class names and contiguous ids 0..K-1.
class LabelMap {
 public:
  explicit LabelMap(std::vector<std::string> names);

  /// The eight RealWorld HAR activities in their canonical order.
  static LabelMap rwhar();
  /// First `k` RWHAR names, extended with "class_<i>" beyond eight.
  static LabelMap first_n(std::size_t k);

  std::size_t size() const { return names_.size(); }
  const std::string& name(ClassId id) const;
  ClassId id(const std::string& name) const;  // throws DataError when unknown
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const LabelMap& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ClassId> index_;
};

/// One subject's multichannel stream. `samples` and `missing` are T x C, row-major.
struct SensorRecording {
  std::string subject_id;
  std::vector<double> timestamps;
  std::vector<std::string> channels;
  std::vector<double> samples;
  std::vector<ClassId> labels;
  std::vector<std::uint8_t> missing;

  std::size_t length() const { return timestamps.size(); }
  std::size_t channel_count() const { return channels.size(); }
  double value(std::size_t t, std::size_t c) const { return samples[t * channels.size() + c]; }
  double& value(std::size_t t, std::size_t c) { return samples[t * channels.size() + c]; }
  bool is_missing(std::size_t t, std::size_t c) const { return missing[t * channels.size() + c] != 0; }
  bool has_missing() const;

  /// Checks every structural invariant; throws DataError.
  void validate(std::size_t class_count) const;
};

/// Reads one recording. Header: subject_id,timestamp,<channels...>,label.
/// Row numbers in error messages count data rows from 1.
SensorRecording load_recording(const std::filesystem::path& path, const LabelMap& labels);

/// All `*.csv` files of a directory in lexicographic order.
std::vector<SensorRecording> load_directory(const std::filesystem::path& dir, const LabelMap& labels);

void write_recording(const std::filesystem::path& path, const SensorRecording& rec, const LabelMap& labels);

struct SyntheticSpec {
  std::size_t subjects = 3;
  std::size_t classes = 3;
  double rate = 50.0;
  double bout_seconds = 17.0;
  std::size_t bouts_per_class = 2;
  std::size_t channel_count = 3;
};

/// Class k emits a sinusoid whose frequency depends only on k, with per-subject
/// amplitude/phase variation and Gaussian noise. Each recording has
/// bouts_per_class * classes * round(bout_seconds * rate) samples.
std::vector<SensorRecording> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Class frequency in Hz used by the generator.
double synthetic_class_frequency(std::size_t class_id, std::size_t classes, double rate);

struct ChannelStats {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

struct DatasetSummary {
  std::vector<std::string> class_names;
  std::vector<std::size_t> class_counts;
  std::vector<std::size_t> bout_counts;
  std::vector<double> mean_bout_seconds;
  std::vector<ChannelStats> channels;
  double sampling_rate = 0.0;
  std::size_t missing_count = 0;
  std::size_t total_samples = 0;
  std::size_t recordings = 0;
};

/// Median of 1/dt over consecutive samples; 0 when fewer than two samples.
double estimate_rate(std::span<const double> timestamps);

DatasetSummary summarize(const std::vector<SensorRecording>& recs, const LabelMap& labels);

nlohmann::ordered_json to_json(const DatasetSummary& summary);

/// class,count,fraction,bouts,mean_bout_seconds
std::string class_distribution_csv(const DatasetSummary& summary);

}  // namespace dlarc::ingest
