#include "dlarc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dlarc/csv.hpp"
#include "dlarc/error.hpp"
#include "dlarc/metrics.hpp"
#include "dlarc/ops.hpp"

namespace dlarc::train {

using nc::Tensor;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("train.label_smoothing must be in [0, 1)");
  }
  if (!(augment.jitter_sigma >= 0.0) || !(augment.scale_sigma >= 0.0)) {
    throw ConfigError("train augmentation sigmas must be >= 0");
  }
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch", cfg.batch},
          {"lr", cfg.adam.lr},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"eps", cfg.adam.eps},
          {"label_smoothing", cfg.label_smoothing},
          {"maxup", cfg.maxup},
          {"jitter_sigma", cfg.augment.jitter_sigma},
          {"scale_sigma", cfg.augment.scale_sigma}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") cfg.epochs = value.get<std::size_t>();
      else if (key == "batch") cfg.batch = value.get<std::size_t>();
      else if (key == "lr") cfg.adam.lr = value.get<double>();
      else if (key == "beta1") cfg.adam.beta1 = value.get<double>();
      else if (key == "beta2") cfg.adam.beta2 = value.get<double>();
      else if (key == "eps") cfg.adam.eps = value.get<double>();
      else if (key == "label_smoothing") cfg.label_smoothing = value.get<double>();
      else if (key == "maxup") cfg.maxup = value.get<std::size_t>();
      else if (key == "jitter_sigma") cfg.augment.jitter_sigma = value.get<double>();
      else if (key == "scale_sigma") cfg.augment.scale_sigma = value.get<double>();
      else throw ConfigError("train: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train." + key + ": " + e.what());
    }
  }
  return cfg;
}

std::string history_csv(const TrainHistory& history) {
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc,val_macro_f1\n";
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + "," + csv::format_double(e.train_loss) + "," + csv::format_double(e.train_acc) +
           "," + opt(e.val_loss) + "," + opt(e.val_acc) + "," + opt(e.val_macro_f1) + "\n";
  }
  return out;
}

std::vector<double> smooth_labels(ingest::ClassId class_id, std::size_t k, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("label smoothing must be in [0, 1)");
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= k) {
    throw DataError("smooth_labels: class " + std::to_string(class_id) + " outside [0, " + std::to_string(k) + ")");
  }
  const double off = eps / static_cast<double>(k);
  std::vector<double> q(k, off);
  q[static_cast<std::size_t>(class_id)] = (1.0 - eps) + off;
  return q;
}

double smoothed_target_entropy(std::size_t k, double eps) {
  const double on = (1.0 - eps) + eps / static_cast<double>(k);
  const double off = eps / static_cast<double>(k);
  double h = -on * std::log(on);
  if (off > 0.0) h -= static_cast<double>(k - 1) * off * std::log(off);
  return h;
}

std::vector<double> augment(std::span<const double> window, std::size_t channels, AugmentKind kind,
                            const AugmentParams& params, Rng& rng) {
  if (channels == 0 || window.size() % channels != 0) throw ShapeError("augment: window is not W x C");
  std::vector<double> out(window.begin(), window.end());
  if (kind == AugmentKind::jitter) {
    std::normal_distribution<double> noise(0.0, params.jitter_sigma);
    if (params.jitter_sigma > 0.0) {
      for (auto& v : out) v += noise(rng);
    }
  } else {
    std::normal_distribution<double> factor(1.0, params.scale_sigma);
    if (params.scale_sigma > 0.0) {
      std::vector<double> s(channels);
      for (auto& f : s) f = factor(rng);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s[i % channels];
    }
  }
  return out;
}

std::vector<std::vector<double>> maxup_copies(std::span<const double> window, std::size_t channels, std::size_t m,
                                              const AugmentParams& params, Rng& rng) {
  if (m < 1) throw ConfigError("maxup needs m >= 1");
  std::vector<std::vector<double>> copies;
  copies.reserve(m);
  copies.emplace_back(window.begin(), window.end());
  for (std::size_t i = 1; i < m; ++i) {
    auto scaled = augment(window, channels, AugmentKind::scale, params, rng);
    copies.push_back(augment(scaled, channels, AugmentKind::jitter, params, rng));
  }
  return copies;
}

namespace {

// Per window, the index of the copy with the largest loss (first on ties).
std::vector<std::size_t> worst_copies(std::span<const double> logits, std::span<const double> targets,
                                      std::size_t windows, std::size_t m, std::size_t k) {
  std::vector<std::size_t> pick(windows, 0);
  for (std::size_t w = 0; w < windows; ++w) {
    auto t = targets.subspan(w * k, k);
    double best = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double l = nc::cross_entropy_row(logits.subspan((w * m + c) * k, k), t);
      if (c == 0 || l > best) {
        best = l;
        pick[w] = c;
      }
    }
  }
  return pick;
}

}  // namespace

Tensor maxup_loss(const model::Model& model, std::span<const double> window, std::span<const double> target,
                  std::size_t m, const AugmentParams& params, Rng& rng) {
  const auto& s = model.spec();
  if (window.size() != s.window * s.channels) throw ShapeError("maxup_loss: window is not W x C");
  if (target.size() != s.classes) throw ShapeError("maxup_loss: target is not K");
  return maxup_batch_loss(model, window, target, m, params, rng);
}

Tensor maxup_batch_loss(const model::Model& model, std::span<const double> windows, std::span<const double> targets,
                        std::size_t m, const AugmentParams& params, Rng& rng, std::vector<double>* clean_logits) {
  if (m < 1) throw ConfigError("maxup needs m >= 1");
  const auto& s = model.spec();
  const std::size_t ws = s.window * s.channels, k = s.classes;
  if (ws == 0 || windows.size() % ws != 0) throw ShapeError("maxup: windows are not [B, W, C]");
  const std::size_t b = windows.size() / ws;
  if (targets.size() != b * k) throw ShapeError("maxup: targets are not [B, K]");

  std::vector<double> stacked;
  stacked.reserve(b * m * ws);
  for (std::size_t w = 0; w < b; ++w) {
    for (auto& c : maxup_copies(windows.subspan(w * ws, ws), s.channels, m, params, rng)) {
      stacked.insert(stacked.end(), c.begin(), c.end());
    }
  }
  const auto all_logits = model::infer_logits(model, stacked);
  const auto pick = worst_copies(all_logits, targets, b, m, k);

  std::vector<double> chosen;
  chosen.reserve(b * ws);
  for (std::size_t w = 0; w < b; ++w) {
    auto first = stacked.begin() + static_cast<std::ptrdiff_t>((w * m + pick[w]) * ws);
    chosen.insert(chosen.end(), first, first + static_cast<std::ptrdiff_t>(ws));
  }
  Tensor logits = model.forward(Tensor({b, s.window, s.channels}, std::move(chosen)));
  if (clean_logits) {
    clean_logits->clear();
    for (std::size_t w = 0; w < b; ++w) {
      auto first = all_logits.begin() + static_cast<std::ptrdiff_t>(w * m * k);
      clean_logits->insert(clean_logits->end(), first, first + static_cast<std::ptrdiff_t>(k));
    }
  }
  return nc::softmax_cross_entropy(logits, Tensor({b, k}, std::vector<double>(targets.begin(), targets.end())));
}

TrainHistory train(model::Model& model, const preprocess::WindowedDataset& train_set,
                   const preprocess::WindowedDataset* val, const TrainConfig& cfg) {
  cfg.validate();
  const auto& spec = model.spec();
  const std::size_t n = train_set.size();
  if (n == 0) throw DataError("train: empty training set");
  if (train_set.window_length != spec.window || train_set.channel_count() != spec.channels) {
    throw ShapeError("train: windows are " + std::to_string(train_set.window_length) + " x " +
                     std::to_string(train_set.channel_count()) + ", model expects " + std::to_string(spec.window) +
                     " x " + std::to_string(spec.channels));
  }
  const std::size_t k = spec.classes, ws = train_set.window_size();
  for (auto c : train_set.labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= k) throw DataError("train: class id outside the model's classes");
  }

  Rng shuffle_rng = make_stream(cfg.seed, "shuffle");
  Rng augment_rng = make_stream(cfg.seed, "augment");
  auto params = model.parameters();
  nc::AdamState adam(cfg.adam, params);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0, min_loss = 0.0;
    std::size_t correct = 0, batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch, ++batch_index) {
      const std::size_t b = std::min(cfg.batch, n - start);
      std::vector<double> x, t;
      std::vector<ingest::ClassId> y;
      x.reserve(b * ws);
      t.reserve(b * k);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = order[start + i];
        auto w = train_set.window(idx);
        x.insert(x.end(), w.begin(), w.end());
        const auto q = smooth_labels(train_set.labels[idx], k, cfg.label_smoothing);
        t.insert(t.end(), q.begin(), q.end());
        y.push_back(train_set.labels[idx]);
      }

      model.zero_grad();
      Tensor loss;
      std::vector<double> clean;
      if (cfg.maxup >= 1) {
        loss = maxup_batch_loss(model, x, t, cfg.maxup, cfg.augment, augment_rng, &clean);
      } else {
        Tensor logits = model.forward(Tensor({b, spec.window, spec.channels}, std::move(x)));
        clean.assign(logits.values().begin(), logits.values().end());
        loss = nc::softmax_cross_entropy(logits, Tensor({b, k}, std::move(t)));
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch_index));
      }
      loss.backward();
      nc::adam_update(params, adam);

      const auto pred = model::argmax_rows(clean, k);
      for (std::size_t i = 0; i < b; ++i) correct += pred[i] == y[i] ? 1 : 0;
      loss_sum += value * static_cast<double>(b);
      min_loss = batch_index == 0 ? value : std::min(min_loss, value);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    rec.min_batch_loss = min_loss;
    if (val && val->size() > 0) {
      const auto logits = model::infer_logits(model, val->windows);
      double vl = 0.0;
      for (std::size_t i = 0; i < val->size(); ++i) {
        const auto q = smooth_labels(val->labels[i], k, 0.0);
        vl += nc::cross_entropy_row(std::span<const double>(logits).subspan(i * k, k), q);
      }
      const auto pred = model::argmax_rows(logits, k);
      const auto cm = val->label_map.size() == k ? eval::confusion_matrix(val->labels, pred, val->label_map)
                                                 : eval::confusion_matrix(val->labels, pred, k);
      const auto report = eval::compute_metrics(cm);
      rec.val_loss = vl / static_cast<double>(val->size());
      rec.val_acc = report.accuracy;
      rec.val_macro_f1 = report.macro_f1;
    }
    history.epochs.push_back(rec);
  }
  return history;
}

}  // namespace dlarc::train
