#include "dlarc/commands.hpp"

#include <utility>

#include "dlarc/csv.hpp"
#include "dlarc/error.hpp"
#include "dlarc/metrics.hpp"
#include "dlarc/model.hpp"
#include "dlarc/param_io.hpp"
#include "dlarc/train.hpp"
#include "dlarc/validate.hpp"

namespace dlarc::cli {

namespace fs = std::filesystem;

namespace {

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    rethrow_with_context(name);
  }
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { csv::write_text(path, j.dump(2) + "\n"); }

void prepare_output(const RunConfig& cfg, const fs::path& out, const std::string& command) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error("cannot create output directory " + out.string() + ": " + ec.message());
  write_json(out / "run_manifest.json", manifest(command, cfg));
}

// Fold ids come from subject ids; keep file names portable.
std::string file_safe(const std::string& id) {
  std::string s = id;
  for (auto& ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '-' ||
                    ch == '_' || ch == '.';
    if (!ok) ch = '_';
  }
  return s;
}

model::ModelSpec resolved_spec(const RunConfig& cfg, const preprocess::WindowedDataset& ds) {
  model::ModelSpec spec = cfg.model;
  spec.channels = ds.channel_count();
  spec.window = ds.window_length;
  spec.classes = ds.label_map.size();
  spec.seed = cfg.seed;
  return spec;
}

}  // namespace

std::vector<ingest::SensorRecording> load_data(const RunConfig& cfg) {
  return stage("ingest", [&] {
    if (cfg.data.use_synthetic) return ingest::generate_synthetic(cfg.data.synthetic, cfg.seed);
    return ingest::load_directory(cfg.data.directory, cfg.label_map());
  });
}

preprocess::WindowedDataset prepare_windows(const RunConfig& cfg) {
  auto recs = load_data(cfg);
  stage("interpolate", [&] {
    for (auto& r : recs) r = preprocess::interpolate_missing(r);
  });
  stage("resample", [&] {
    for (auto& r : recs) r = preprocess::resample(r, cfg.preprocess.target_rate);
  });
  return stage("window", [&] {
    return preprocess::sliding_windows(recs, cfg.window_samples(), cfg.stride_samples(), cfg.preprocess.labeling,
                                       cfg.label_map());
  });
}

nlohmann::ordered_json manifest(const std::string& command, const RunConfig& cfg) {
  return {{"command", command}, {"seed", cfg.seed}, {"config", to_json(cfg)}};
}

void cmd_summarize(const RunConfig& cfg, const fs::path& out) {
  prepare_output(cfg, out, "summarize");
  const auto recs = load_data(cfg);
  const auto summary = stage("summarize", [&] { return ingest::summarize(recs, cfg.label_map()); });
  write_json(out / "summary.json", ingest::to_json(summary));
  csv::write_text(out / "class_distribution.csv", ingest::class_distribution_csv(summary));
}

void cmd_train(const RunConfig& cfg, const fs::path& out) {
  prepare_output(cfg, out, "train");
  const auto ds = prepare_windows(cfg);
  const auto split = stage("split", [&] {
    return validate::split_train_val(ds, cfg.validation.val_fraction, cfg.seed, cfg.validation.grouping);
  });
  const auto norm = stage("normalize", [&] {
    return preprocess::fit_normalizer(ds, split.train, cfg.preprocess.normalization);
  });
  const auto normalized = preprocess::apply_normalizer(ds, norm);
  const auto train_set = normalized.subset(split.train);
  const auto val_set = normalized.subset(split.test);

  const auto spec = stage("model", [&] {
    auto s = resolved_spec(cfg, ds);
    s.validate();
    return s;
  });
  model::Model model(spec);
  train::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  const auto history = stage("train", [&] { return train::train(model, train_set, &val_set, tcfg); });

  const auto pred = model::argmax_rows(model::infer_logits(model, val_set.windows), spec.classes);
  const auto cm = eval::confusion_matrix(val_set.labels, pred, ds.label_map);
  const auto report = stage("evaluate", [&] { return eval::compute_metrics(cm); });

  nc::save_params(out / "weights.csv", model.named_parameters());
  write_json(out / "model_spec.json", model::to_json(spec));
  write_json(out / "norm_stats.json", preprocess::to_json(norm));
  csv::write_text(out / "history.csv", train::history_csv(history));
  write_json(out / "metrics.json", eval::to_json(report));
  csv::write_text(out / "confusion.csv", eval::confusion_csv(cm));
}

void cmd_crossval(const RunConfig& cfg, const fs::path& out) {
  prepare_output(cfg, out, "crossval");
  const auto ds = prepare_windows(cfg);
  const auto report = stage("crossval", [&] {
    return validate::run_cross_validation(ds, cfg.preprocess.normalization, cfg.model, cfg.train, cfg.validation,
                                          cfg.seed);
  });
  write_json(out / "crossval_report.json", validate::to_json(report));
  for (const auto& f : report.folds) {
    const std::string id = file_safe(f.id);
    csv::write_text(out / ("fold_" + id + "_history.csv"), train::history_csv(f.history));
    auto j = eval::to_json(f.metrics);
    j["confusion"] = eval::to_json(f.confusion);
    j["norm_stats"] = preprocess::to_json(f.norm);
    write_json(out / ("fold_" + id + "_metrics.json"), j);
  }
}

void cmd_tune(const RunConfig& cfg, const fs::path& out) {
  prepare_output(cfg, out, "tune");
  const auto ds = prepare_windows(cfg);
  const auto result = stage("tune", [&] {
    return validate::random_search(ds, cfg.preprocess.normalization, cfg.model, cfg.train, cfg.search,
                                   cfg.validation.val_fraction, cfg.validation.grouping, cfg.seed);
  });
  RunConfig best = cfg;
  best.model.filters = result.best_model.filters;
  best.model.hidden = result.best_model.hidden;
  best.train = result.best_train;
  write_json(out / "best_config.json", to_json(best));
  csv::write_text(out / "trials.csv", validate::trials_csv(result));
}

}  // namespace dlarc::cli
