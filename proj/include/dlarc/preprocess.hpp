#pragma once

// Gap filling, resampling, per-channel scaling and sliding-window segmentation.
// Default order: interpolate_missing -> resample -> normalize -> sliding_windows.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlarc/ingest.hpp"

namespace dlarc::preprocess {

using ingest::ClassId;
using ingest::LabelMap;
using ingest::SensorRecording;

enum class NormScheme { zscore, minmax };
enum class Labeling { majority, last_sample };

std::string to_string(NormScheme s);
std::string to_string(Labeling l);
NormScheme parse_norm_scheme(const std::string& s);
Labeling parse_labeling(const std::string& s);

/// Per-channel scaling statistics. For zscore `center`/`spread` hold mean and
/// population std; for minmax they hold min and max.
struct NormStats {
  NormScheme scheme = NormScheme::zscore;
  std::vector<std::string> channels;
  std::vector<double> center;
  std::vector<double> spread;

  /// Maps one raw value of channel `c` to normalized units.
  double apply(std::size_t c, double x) const;
};

nlohmann::ordered_json to_json(const NormStats& stats);
NormStats norm_stats_from_json(const nlohmann::json& j);

/// Fills interior gaps by linear interpolation in time, edges by the nearest
/// present value. Present values are copied bit-for-bit.
SensorRecording interpolate_missing(const SensorRecording& rec);

/// Linear resampling onto t0 + k/target_rate. Labels come from the nearest
/// original sample, ties to the earlier one.
SensorRecording resample(const SensorRecording& rec, double target_rate);

/// Statistics over the concatenation of all samples of `recs`. Masked values are skipped.
NormStats fit_normalizer(std::span<const SensorRecording> recs, NormScheme scheme);

SensorRecording apply_normalizer(const SensorRecording& rec, const NormStats& stats);

/// Fixed-length windows with subject provenance. `windows` is N x W x C, row-major.
struct WindowedDataset {
  std::vector<double> windows;
  std::vector<ClassId> labels;
  std::vector<std::string> subject_ids;
  std::vector<std::string> channels;
  std::size_t window_length = 0;
  std::size_t stride = 1;
  double rate = 0.0;
  LabelMap label_map = LabelMap::rwhar();

  std::size_t size() const { return labels.size(); }
  std::size_t channel_count() const { return channels.size(); }
  std::size_t window_size() const { return window_length * channels.size(); }
  std::span<const double> window(std::size_t i) const {
    return {windows.data() + i * window_size(), window_size()};
  }

  /// Windows at `indices`, in that order.
  WindowedDataset subset(std::span<const std::size_t> indices) const;
  /// Sorted distinct subject ids.
  std::vector<std::string> subjects() const;
};

/// Number of windows a recording of length T yields.
std::size_t window_count(std::size_t T, std::size_t W, std::size_t S);

WindowedDataset sliding_windows(std::span<const SensorRecording> recs, std::size_t W, std::size_t S,
                                Labeling labeling, const LabelMap& label_map);

/// Statistics over every sample of the windows at `indices` (overlapping
/// samples counted once per window that contains them).
NormStats fit_normalizer(const WindowedDataset& ds, std::span<const std::size_t> indices, NormScheme scheme);

WindowedDataset apply_normalizer(const WindowedDataset& ds, const NormStats& stats);

/// Debug dump: window_id,subject_id,label,t_index,<channels...>
void write_windows_csv(const std::filesystem::path& path, const WindowedDataset& ds);

}  // namespace dlarc::preprocess
