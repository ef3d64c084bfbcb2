#pragma once

// The four CLI commands. Each writes its artifacts plus run_manifest.json into
// `out`; rerunning with the manifest as config reproduces every file.

#include <filesystem>
#include <string>
#include <vector>

#include "dlarc/ingest.hpp"
#include "dlarc/preprocess.hpp"
#include "dlarc/run_config.hpp"

namespace dlarc::cli {

/// Recordings as loaded or synthesized, before any preprocessing.
std::vector<ingest::SensorRecording> load_data(const RunConfig& cfg);

/// interpolate -> resample -> sliding windows. Windows are not normalized.
preprocess::WindowedDataset prepare_windows(const RunConfig& cfg);

/// {"command": ..., "config": ...}
nlohmann::ordered_json manifest(const std::string& command, const RunConfig& cfg);

/// summary.json, class_distribution.csv
void cmd_summarize(const RunConfig& cfg, const std::filesystem::path& out);
/// weights.csv, model_spec.json, norm_stats.json, history.csv, metrics.json, confusion.csv
void cmd_train(const RunConfig& cfg, const std::filesystem::path& out);
/// crossval_report.json, fold_<id>_history.csv, fold_<id>_metrics.json
void cmd_crossval(const RunConfig& cfg, const std::filesystem::path& out);
/// best_config.json, trials.csv
void cmd_tune(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace dlarc::cli
