#include "dlarc/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dlarc/csv.hpp"
#include "dlarc/error.hpp"

namespace dlarc::preprocess {

namespace {

constexpr double kDegenerate = 1e-12;

void require_same_channels(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           const std::string& what) {
  if (a != b) throw DataError(what + ": channel sets do not match");
}

}  // namespace

std::string to_string(NormScheme s) { return s == NormScheme::zscore ? "zscore" : "minmax"; }
std::string to_string(Labeling l) { return l == Labeling::majority ? "majority" : "last_sample"; }

NormScheme parse_norm_scheme(const std::string& s) {
  if (s == "zscore") return NormScheme::zscore;
  if (s == "minmax") return NormScheme::minmax;
  throw ConfigError("unknown normalization scheme '" + s + "' (expected zscore|minmax)");
}

Labeling parse_labeling(const std::string& s) {
  if (s == "majority") return Labeling::majority;
  if (s == "last_sample") return Labeling::last_sample;
  throw ConfigError("unknown labeling rule '" + s + "' (expected majority|last_sample)");
}

double NormStats::apply(std::size_t c, double x) const {
  if (scheme == NormScheme::zscore) {
    const double sd = spread[c] < kDegenerate ? 1.0 : spread[c];
    return (x - center[c]) / sd;
  }
  double range = spread[c] - center[c];
  if (range < kDegenerate) range = 1.0;
  return (x - center[c]) / range;
}

nlohmann::ordered_json to_json(const NormStats& stats) {
  nlohmann::ordered_json j;
  j["scheme"] = to_string(stats.scheme);
  j["channels"] = stats.channels;
  if (stats.scheme == NormScheme::zscore) {
    j["mean"] = stats.center;
    j["std"] = stats.spread;
  } else {
    j["min"] = stats.center;
    j["max"] = stats.spread;
  }
  return j;
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s;
  s.scheme = parse_norm_scheme(j.at("scheme").get<std::string>());
  s.channels = j.at("channels").get<std::vector<std::string>>();
  if (s.scheme == NormScheme::zscore) {
    s.center = j.at("mean").get<std::vector<double>>();
    s.spread = j.at("std").get<std::vector<double>>();
  } else {
    s.center = j.at("min").get<std::vector<double>>();
    s.spread = j.at("max").get<std::vector<double>>();
  }
  if (s.center.size() != s.channels.size() || s.spread.size() != s.channels.size()) {
    throw DataError("normalizer statistics: channel count mismatch");
  }
  return s;
}

// ---------------------------------------------------------------------------

SensorRecording interpolate_missing(const SensorRecording& rec) {
  SensorRecording out = rec;
  const std::size_t T = rec.length();
  const std::size_t C = rec.channel_count();
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<std::size_t> present;
    for (std::size_t t = 0; t < T; ++t) {
      if (!rec.is_missing(t, c)) present.push_back(t);
    }
    if (present.empty()) {
      throw DataError(rec.subject_id + ": channel '" + rec.channels[c] + "' has no present values");
    }
    if (present.size() == T) continue;
    std::size_t next = 0;  // index into `present` of the first present sample >= t
    for (std::size_t t = 0; t < T; ++t) {
      while (next < present.size() && present[next] < t) ++next;
      if (!rec.is_missing(t, c)) continue;
      if (next == 0) {
        out.value(t, c) = rec.value(present.front(), c);
      } else if (next == present.size()) {
        out.value(t, c) = rec.value(present.back(), c);
      } else {
        const std::size_t a = present[next - 1];
        const std::size_t b = present[next];
        const double ta = rec.timestamps[a], tb = rec.timestamps[b];
        const double va = rec.value(a, c), vb = rec.value(b, c);
        out.value(t, c) = va + (vb - va) * (rec.timestamps[t] - ta) / (tb - ta);
      }
    }
  }
  std::fill(out.missing.begin(), out.missing.end(), 0);
  return out;
}

SensorRecording resample(const SensorRecording& rec, double target_rate) {
  if (!(target_rate > 0.0)) throw DataError("resample: target rate must be > 0");
  if (rec.length() < 2) throw DataError(rec.subject_id + ": resample needs at least 2 samples");
  if (rec.has_missing()) throw DataError(rec.subject_id + ": resample requires gap-free input");

  const std::size_t C = rec.channel_count();
  const double t0 = rec.timestamps.front();
  const double span = rec.timestamps.back() - t0;
  // The small slack keeps an exact grid point that lands on t_last from being
  // lost to representation error in span * rate.
  const auto n = static_cast<std::size_t>(std::floor(span * target_rate + 1e-9)) + 1;

  SensorRecording out;
  out.subject_id = rec.subject_id;
  out.channels = rec.channels;
  out.timestamps.resize(n);
  out.samples.resize(n * C);
  out.labels.resize(n);
  out.missing.assign(n * C, 0);

  std::size_t j = 0;
  const std::size_t last = rec.length() - 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) / target_rate;
    out.timestamps[k] = t;
    while (j + 1 < last && rec.timestamps[j + 1] <= t) ++j;
    const double ta = rec.timestamps[j], tb = rec.timestamps[j + 1];
    double w = (t - ta) / (tb - ta);
    w = std::clamp(w, 0.0, 1.0);
    for (std::size_t c = 0; c < C; ++c) {
      const double va = rec.value(j, c), vb = rec.value(j + 1, c);
      out.samples[k * C + c] = va + (vb - va) * w;
    }
    out.labels[k] = (t - ta) <= (tb - t) ? rec.labels[j] : rec.labels[j + 1];
  }
  return out;
}

namespace {

struct Accumulator {
  explicit Accumulator(std::size_t channels)
      : sum(channels, 0.0), sq(channels, 0.0), count(channels, 0), mn(channels, 0.0), mx(channels, 0.0) {}

  void add(std::size_t c, double v) {
    if (count[c] == 0) {
      mn[c] = mx[c] = v;
    } else {
      mn[c] = std::min(mn[c], v);
      mx[c] = std::max(mx[c], v);
    }
    sum[c] += v;
    ++count[c];
  }

  std::vector<double> sum, sq;
  std::vector<std::size_t> count;
  std::vector<double> mn, mx;
};

// Two passes: means first, then squared deviations, so the std stays accurate
// for channels with a large offset.
template <typename ForEach>
NormStats fit_impl(const std::vector<std::string>& channels, NormScheme scheme, ForEach for_each) {
  const std::size_t C = channels.size();
  Accumulator acc(C);
  for_each([&](std::size_t c, double v) { acc.add(c, v); });
  NormStats stats;
  stats.scheme = scheme;
  stats.channels = channels;
  for (std::size_t c = 0; c < C; ++c) {
    if (acc.count[c] == 0) throw DataError("fit_normalizer: channel '" + channels[c] + "' has no values");
  }
  if (scheme == NormScheme::minmax) {
    stats.center = acc.mn;
    stats.spread = acc.mx;
    return stats;
  }
  std::vector<double> mean(C);
  for (std::size_t c = 0; c < C; ++c) mean[c] = acc.sum[c] / static_cast<double>(acc.count[c]);
  for_each([&](std::size_t c, double v) {
    const double d = v - mean[c];
    acc.sq[c] += d * d;
  });
  stats.center = mean;
  stats.spread.resize(C);
  for (std::size_t c = 0; c < C; ++c) stats.spread[c] = std::sqrt(acc.sq[c] / static_cast<double>(acc.count[c]));
  return stats;
}

}  // namespace

NormStats fit_normalizer(std::span<const SensorRecording> recs, NormScheme scheme) {
  if (recs.empty()) throw DataError("fit_normalizer: no training recordings");
  for (const auto& r : recs) require_same_channels(recs.front().channels, r.channels, "fit_normalizer");
  return fit_impl(recs.front().channels, scheme, [&](auto&& visit) {
    for (const auto& r : recs) {
      const std::size_t C = r.channel_count();
      for (std::size_t t = 0; t < r.length(); ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          if (!r.is_missing(t, c)) visit(c, r.value(t, c));
        }
      }
    }
  });
}

SensorRecording apply_normalizer(const SensorRecording& rec, const NormStats& stats) {
  require_same_channels(stats.channels, rec.channels, "apply_normalizer");
  SensorRecording out = rec;
  const std::size_t C = rec.channel_count();
  for (std::size_t t = 0; t < rec.length(); ++t) {
    for (std::size_t c = 0; c < C; ++c) out.value(t, c) = stats.apply(c, rec.value(t, c));
  }
  return out;
}

// ---------------------------------------------------------------------------

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  WindowedDataset out;
  out.channels = channels;
  out.window_length = window_length;
  out.stride = stride;
  out.rate = rate;
  out.label_map = label_map;
  const std::size_t ws = window_size();
  out.windows.reserve(indices.size() * ws);
  for (std::size_t i : indices) {
    if (i >= size()) throw DataError("window index " + std::to_string(i) + " out of range");
    auto w = window(i);
    out.windows.insert(out.windows.end(), w.begin(), w.end());
    out.labels.push_back(labels[i]);
    out.subject_ids.push_back(subject_ids[i]);
  }
  return out;
}

std::vector<std::string> WindowedDataset::subjects() const {
  std::set<std::string> s(subject_ids.begin(), subject_ids.end());
  return {s.begin(), s.end()};
}

std::size_t window_count(std::size_t T, std::size_t W, std::size_t S) {
  if (W == 0 || S == 0 || T < W) return 0;
  return (T - W) / S + 1;
}

WindowedDataset sliding_windows(std::span<const SensorRecording> recs, std::size_t W, std::size_t S,
                                Labeling labeling, const LabelMap& label_map) {
  if (W < 1) throw DataError("sliding_windows: window length must be >= 1");
  if (S < 1) throw DataError("sliding_windows: stride must be >= 1");
  if (recs.empty()) throw DataError("sliding_windows: no recordings");
  WindowedDataset ds;
  ds.channels = recs.front().channels;
  ds.window_length = W;
  ds.stride = S;
  ds.rate = ingest::estimate_rate(recs.front().timestamps);
  ds.label_map = label_map;
  const std::size_t C = ds.channels.size();
  const std::size_t K = label_map.size();

  std::vector<std::size_t> counts(K);
  for (const auto& r : recs) {
    require_same_channels(ds.channels, r.channels, "sliding_windows");
    const std::size_t n = window_count(r.length(), W, S);
    for (std::size_t w = 0; w < n; ++w) {
      const std::size_t start = w * S;
      ds.windows.insert(ds.windows.end(), r.samples.begin() + static_cast<std::ptrdiff_t>(start * C),
                        r.samples.begin() + static_cast<std::ptrdiff_t>((start + W) * C));
      ClassId label = r.labels[start + W - 1];
      if (labeling == Labeling::majority) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t t = start; t < start + W; ++t) ++counts[static_cast<std::size_t>(r.labels[t])];
        // max_element returns the first maximum, i.e. the smallest class id on ties.
        label = static_cast<ClassId>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      }
      ds.labels.push_back(label);
      ds.subject_ids.push_back(r.subject_id);
    }
  }
  return ds;
}

NormStats fit_normalizer(const WindowedDataset& ds, std::span<const std::size_t> indices, NormScheme scheme) {
  if (indices.empty()) throw DataError("fit_normalizer: no training windows");
  const std::size_t C = ds.channel_count();
  return fit_impl(ds.channels, scheme, [&](auto&& visit) {
    for (std::size_t i : indices) {
      auto w = ds.window(i);
      for (std::size_t j = 0; j < w.size(); ++j) visit(j % C, w[j]);
    }
  });
}

WindowedDataset apply_normalizer(const WindowedDataset& ds, const NormStats& stats) {
  require_same_channels(stats.channels, ds.channels, "apply_normalizer");
  WindowedDataset out = ds;
  const std::size_t C = ds.channel_count();
  for (std::size_t j = 0; j < out.windows.size(); ++j) out.windows[j] = stats.apply(j % C, ds.windows[j]);
  return out;
}

void write_windows_csv(const std::filesystem::path& path, const WindowedDataset& ds) {
  std::ostringstream out;
  out << "window_id,subject_id,label,t_index";
  for (const auto& c : ds.channels) out << ',' << c;
  out << '\n';
  const std::size_t C = ds.channel_count();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto w = ds.window(i);
    for (std::size_t t = 0; t < ds.window_length; ++t) {
      out << i << ',' << ds.subject_ids[i] << ',' << ds.label_map.name(ds.labels[i]) << ',' << t;
      for (std::size_t c = 0; c < C; ++c) out << ',' << csv::format_double(w[t * C + c]);
      out << '\n';
    }
  }
  csv::write_text(path, out.str());
}

}  // namespace dlarc::preprocess
