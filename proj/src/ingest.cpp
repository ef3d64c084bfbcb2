#include "dlarc/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "dlarc/csv.hpp"
#include "dlarc/error.hpp"
#include "dlarc/rng.hpp"

namespace dlarc::ingest {

// ---------------------------------------------------------------------------
// LabelMap

LabelMap::LabelMap(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw DataError("label map needs at least two classes");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw DataError("label map contains an empty class name");
    if (!index_.emplace(names_[i], static_cast<ClassId>(i)).second) {
      throw DataError("duplicate class name '" + names_[i] + "'");
    }
  }
}

LabelMap LabelMap::rwhar() {
  return LabelMap({"walking_upstairs", "walking_downstairs", "jumping", "lying", "standing",
                   "sitting", "running", "walking"});
}

LabelMap LabelMap::first_n(std::size_t k) {
  auto base = rwhar().names();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) {
    names.push_back(i < base.size() ? base[i] : "class_" + std::to_string(i));
  }
  return LabelMap(std::move(names));
}

const std::string& LabelMap::name(ClassId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw DataError("class id " + std::to_string(id) + " out of range");
  }
  return names_[static_cast<std::size_t>(id)];
}

ClassId LabelMap::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown label '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// SensorRecording

bool SensorRecording::has_missing() const {
  return std::any_of(missing.begin(), missing.end(), [](std::uint8_t m) { return m != 0; });
}

void SensorRecording::validate(std::size_t class_count) const {
  if (channels.empty()) throw DataError(subject_id + ": recording has no channels");
  {
    auto sorted = channels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw DataError(subject_id + ": duplicate channel names");
    }
  }
  const std::size_t T = timestamps.size();
  const std::size_t C = channels.size();
  if (labels.size() != T || samples.size() != T * C || missing.size() != T * C) {
    throw DataError(subject_id + ": inconsistent recording buffer sizes");
  }
  for (std::size_t t = 1; t < T; ++t) {
    if (!(timestamps[t] > timestamps[t - 1])) {
      throw DataError(subject_id + ": non-monotonic at row " + std::to_string(t + 1));
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= class_count) {
      throw DataError(subject_id + ": label out of range at row " + std::to_string(t + 1));
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

SensorRecording load_recording(const std::filesystem::path& path, const LabelMap& labels) {
  const std::string where = path.string();
  const auto lines = csv::read_lines(path);

  std::size_t first = 0;
  while (first < lines.size() && lines[first].empty()) ++first;
  if (first == lines.size()) throw DataError(where + ": empty file");

  const auto header = csv::split_line(lines[first]);
  int subject_col = -1, time_col = -1, label_col = -1;
  std::vector<std::size_t> channel_cols;
  SensorRecording rec;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h == "subject_id") {
      subject_col = static_cast<int>(i);
    } else if (h == "timestamp") {
      time_col = static_cast<int>(i);
    } else if (h == "label") {
      label_col = static_cast<int>(i);
    } else {
      channel_cols.push_back(i);
      rec.channels.push_back(h);
    }
  }
  if (subject_col < 0) throw DataError(where + ": missing mandatory column 'subject_id'");
  if (time_col < 0) throw DataError(where + ": missing mandatory column 'timestamp'");
  if (label_col < 0) throw DataError(where + ": missing mandatory column 'label'");
  if (channel_cols.empty()) throw DataError(where + ": no sensor channel columns");

  const std::size_t C = channel_cols.size();
  std::size_t row = 0;
  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    ++row;
    const std::string ctx = where + ": row " + std::to_string(row);
    const auto fields = csv::split_line(lines[li]);
    if (fields.size() != header.size()) {
      throw DataError(ctx + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const auto& subject = fields[static_cast<std::size_t>(subject_col)];
    if (row == 1) {
      rec.subject_id = subject;
    } else if (subject != rec.subject_id) {
      throw DataError(ctx + ": subject_id '" + subject + "' differs from '" + rec.subject_id + "'");
    }
    const auto& tfield = fields[static_cast<std::size_t>(time_col)];
    if (tfield.empty()) throw DataError(ctx + ": empty timestamp");
    const double t = csv::parse_double(tfield, ctx);
    if (!rec.timestamps.empty() && !(t > rec.timestamps.back())) {
      throw DataError(where + ": non-monotonic at row " + std::to_string(row));
    }
    rec.timestamps.push_back(t);
    for (std::size_t c = 0; c < C; ++c) {
      const auto& f = fields[channel_cols[c]];
      if (f.empty()) {
        rec.samples.push_back(0.0);
        rec.missing.push_back(1);
      } else {
        rec.samples.push_back(csv::parse_double(f, ctx));
        rec.missing.push_back(0);
      }
    }
    const auto& label = fields[static_cast<std::size_t>(label_col)];
    if (!labels.contains(label)) throw DataError(ctx + ": label '" + label + "' not in label map");
    rec.labels.push_back(labels.id(label));
  }
  if (row == 0) throw DataError(where + ": empty file (header only)");
  rec.validate(labels.size());
  return rec;
}

std::vector<SensorRecording> load_directory(const std::filesystem::path& dir, const LabelMap& labels) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no recordings found in " + dir.string());
  std::vector<SensorRecording> recs;
  recs.reserve(files.size());
  for (const auto& f : files) recs.push_back(load_recording(f, labels));
  return recs;
}

void write_recording(const std::filesystem::path& path, const SensorRecording& rec, const LabelMap& labels) {
  std::ostringstream out;
  out << "subject_id,timestamp";
  for (const auto& ch : rec.channels) out << ',' << ch;
  out << ",label\n";
  const std::size_t C = rec.channel_count();
  for (std::size_t t = 0; t < rec.length(); ++t) {
    out << rec.subject_id << ',' << csv::format_double(rec.timestamps[t]);
    for (std::size_t c = 0; c < C; ++c) {
      out << ',';
      if (!rec.is_missing(t, c)) out << csv::format_double(rec.value(t, c));
    }
    out << ',' << labels.name(rec.labels[t]) << '\n';
  }
  csv::write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Synthetic data

double synthetic_class_frequency(std::size_t class_id, std::size_t classes, double rate) {
  // Spread frequencies evenly below a quarter of the sampling rate.
  return static_cast<double>(class_id + 1) * rate / (4.0 * static_cast<double>(classes + 1));
}

namespace {

std::string channel_name(std::size_t c) {
  static const char* kNames[] = {"acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"};
  if (c < 6) return kNames[c];
  return "ch_" + std::to_string(c);
}

std::string subject_name(std::size_t s) {
  std::string n = std::to_string(s + 1);
  if (n.size() < 2) n = "0" + n;
  return "subject_" + n;
}

}  // namespace

std::vector<SensorRecording> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.subjects < 1 || spec.classes < 1 || spec.bouts_per_class < 1 || spec.channel_count < 1) {
    throw DataError("synthetic spec: all counts must be >= 1");
  }
  if (!(spec.rate > 0.0)) throw DataError("synthetic spec: rate must be > 0");
  const auto bout_len = static_cast<std::size_t>(std::llround(spec.bout_seconds * spec.rate));
  if (bout_len < 1) throw DataError("synthetic spec: bout shorter than one sample");

  const std::size_t C = spec.channel_count;
  std::vector<SensorRecording> out;
  out.reserve(spec.subjects);
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    const std::string sid = subject_name(s);
    Rng rng = make_stream(seed, "synthetic/" + sid);
    std::uniform_real_distribution<double> amp_dist(0.9, 1.1);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> offset_dist(0.0, 0.1);
    std::normal_distribution<double> noise(0.0, 0.1);

    std::vector<double> amplitude(C), offset(C);
    for (std::size_t c = 0; c < C; ++c) {
      amplitude[c] = amp_dist(rng) * (1.0 + 0.25 * static_cast<double>(c % 3));
      offset[c] = offset_dist(rng);
    }

    SensorRecording rec;
    rec.subject_id = sid;
    for (std::size_t c = 0; c < C; ++c) rec.channels.push_back(channel_name(c));
    const std::size_t T = spec.bouts_per_class * spec.classes * bout_len;
    rec.timestamps.reserve(T);
    rec.samples.reserve(T * C);
    rec.labels.reserve(T);

    std::vector<std::size_t> order(spec.classes);
    std::size_t i = 0;
    for (std::size_t rep = 0; rep < spec.bouts_per_class; ++rep) {
      for (std::size_t k = 0; k < spec.classes; ++k) order[k] = k;
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k : order) {
        const double freq = synthetic_class_frequency(k, spec.classes, spec.rate);
        // One phase per bout shared by all channels, so the relation between
        // channels carries no bout- or subject-specific cue.
        const double phase = phase_dist(rng);
        for (std::size_t n = 0; n < bout_len; ++n, ++i) {
          const double t = static_cast<double>(i) / spec.rate;
          rec.timestamps.push_back(t);
          for (std::size_t c = 0; c < C; ++c) {
            rec.samples.push_back(offset[c] +
                                  amplitude[c] * std::sin(2.0 * std::numbers::pi * freq * t + phase) +
                                  noise(rng));
          }
          rec.labels.push_back(static_cast<ClassId>(k));
        }
      }
    }
    rec.missing.assign(T * C, 0);
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summary

namespace {

double median_inverse(std::vector<double> gaps) {
  if (gaps.empty()) return 0.0;
  for (auto& g : gaps) g = 1.0 / g;
  std::sort(gaps.begin(), gaps.end());
  const std::size_t n = gaps.size();
  return n % 2 == 1 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

}  // namespace

double estimate_rate(std::span<const double> timestamps) {
  std::vector<double> gaps;
  for (std::size_t t = 1; t < timestamps.size(); ++t) gaps.push_back(timestamps[t] - timestamps[t - 1]);
  return median_inverse(std::move(gaps));
}

DatasetSummary summarize(const std::vector<SensorRecording>& recs, const LabelMap& labels) {
  if (recs.empty()) throw DataError("summarize: no recordings");
  const auto& channels = recs.front().channels;
  for (const auto& r : recs) {
    if (r.channels != channels) throw DataError("summarize: channel set of " + r.subject_id + " differs");
  }
  const std::size_t K = labels.size();
  const std::size_t C = channels.size();

  DatasetSummary s;
  s.class_names = labels.names();
  s.class_counts.assign(K, 0);
  s.bout_counts.assign(K, 0);
  s.mean_bout_seconds.assign(K, 0.0);
  s.recordings = recs.size();

  std::vector<double> pooled;
  for (const auto& r : recs) {
    for (std::size_t t = 1; t < r.length(); ++t) pooled.push_back(r.timestamps[t] - r.timestamps[t - 1]);
  }
  s.sampling_rate = median_inverse(std::move(pooled));

  std::vector<double> bout_total(K, 0.0);
  std::vector<double> sum(C, 0.0), sumsq(C, 0.0);
  std::vector<std::size_t> present(C, 0);
  std::vector<double> mn(C, std::numeric_limits<double>::infinity());
  std::vector<double> mx(C, -std::numeric_limits<double>::infinity());

  for (const auto& r : recs) {
    double rate = estimate_rate(r.timestamps);
    if (rate <= 0.0) rate = s.sampling_rate;
    if (rate <= 0.0) throw DataError("summarize: cannot estimate sampling rate (recordings too short)");
    std::size_t t = 0;
    while (t < r.length()) {
      std::size_t end = t;
      while (end < r.length() && r.labels[end] == r.labels[t]) ++end;
      const auto k = static_cast<std::size_t>(r.labels[t]);
      s.bout_counts[k] += 1;
      bout_total[k] += static_cast<double>(end - t) / rate;
      t = end;
    }
    for (std::size_t i = 0; i < r.length(); ++i) {
      s.class_counts[static_cast<std::size_t>(r.labels[i])] += 1;
      for (std::size_t c = 0; c < C; ++c) {
        if (r.is_missing(i, c)) {
          ++s.missing_count;
          continue;
        }
        const double v = r.value(i, c);
        sum[c] += v;
        sumsq[c] += v * v;
        ++present[c];
        mn[c] = std::min(mn[c], v);
        mx[c] = std::max(mx[c], v);
      }
    }
    s.total_samples += r.length();
  }

  for (std::size_t k = 0; k < K; ++k) {
    if (s.bout_counts[k] > 0) s.mean_bout_seconds[k] = bout_total[k] / static_cast<double>(s.bout_counts[k]);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < C; ++c) {
    ChannelStats cs;
    cs.name = channels[c];
    if (present[c] == 0) {
      cs.min = cs.max = cs.mean = cs.std = nan;
    } else {
      const double n = static_cast<double>(present[c]);
      cs.min = mn[c];
      cs.max = mx[c];
      cs.mean = sum[c] / n;
      cs.std = std::sqrt(std::max(0.0, sumsq[c] / n - cs.mean * cs.mean));
    }
    s.channels.push_back(cs);
  }
  return s;
}

nlohmann::ordered_json to_json(const DatasetSummary& s) {
  nlohmann::ordered_json j;
  j["recordings"] = s.recordings;
  j["total_samples"] = s.total_samples;
  j["sampling_rate_hz"] = s.sampling_rate;
  j["missing_count"] = s.missing_count;
  j["class_count"] = s.class_names.size();
  auto& classes = j["classes"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < s.class_names.size(); ++k) {
    classes.push_back({{"name", s.class_names[k]},
                       {"samples", s.class_counts[k]},
                       {"bouts", s.bout_counts[k]},
                       {"mean_bout_seconds", s.mean_bout_seconds[k]}});
  }
  auto& chans = j["channels"] = nlohmann::ordered_json::array();
  for (const auto& c : s.channels) {
    chans.push_back({{"name", c.name}, {"min", c.min}, {"max", c.max}, {"mean", c.mean}, {"std", c.std}});
  }
  return j;
}

std::string class_distribution_csv(const DatasetSummary& s) {
  std::ostringstream out;
  out << "class,count,fraction,bouts,mean_bout_seconds\n";
  for (std::size_t k = 0; k < s.class_names.size(); ++k) {
    const double frac =
        s.total_samples == 0 ? 0.0 : static_cast<double>(s.class_counts[k]) / static_cast<double>(s.total_samples);
    out << s.class_names[k] << ',' << s.class_counts[k] << ',' << csv::format_double(frac) << ','
        << s.bout_counts[k] << ',' << csv::format_double(s.mean_bout_seconds[k]) << '\n';
  }
  return out.str();
}

}  // namespace dlarc::ingest
