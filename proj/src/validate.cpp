#include "dlarc/validate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "dlarc/csv.hpp"
#include "dlarc/error.hpp"
#include "dlarc/rng.hpp"

namespace dlarc::validate {

namespace {

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& sorted_subset) {
  std::vector<std::size_t> out;
  out.reserve(n - sorted_subset.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (j < sorted_subset.size() && sorted_subset[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

template <typename T>
const T& pick(const std::vector<T>& choices, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, choices.size() - 1);
  return choices[d(rng)];
}

}  // namespace

std::string to_string(Grouping g) { return g == Grouping::window ? "window" : "subject"; }

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::holdout: return "holdout";
    case Protocol::kfold: return "kfold";
    case Protocol::loso: return "loso";
  }
  return "holdout";
}

Grouping parse_grouping(const std::string& s) {
  if (s == "window") return Grouping::window;
  if (s == "subject") return Grouping::subject;
  throw ConfigError("unknown grouping '" + s + "' (expected window|subject)");
}

Protocol parse_protocol(const std::string& s) {
  if (s == "holdout") return Protocol::holdout;
  if (s == "kfold") return Protocol::kfold;
  if (s == "loso") return Protocol::loso;
  throw ConfigError("unknown protocol '" + s + "' (expected holdout|kfold|loso)");
}

FoldSpec split_train_val(const preprocess::WindowedDataset& ds, double val_fraction, std::uint64_t seed,
                         Grouping grouping) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0, 1)");
  const std::size_t n = ds.size();
  if (n < 2) throw DataError("split_train_val: need at least 2 windows, got " + std::to_string(n));
  Rng rng = make_stream(seed, "split");
  FoldSpec fold;
  fold.id = "holdout";
  if (grouping == Grouping::window) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    fold.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  } else {
    auto subjects = ds.subjects();
    if (subjects.size() < 2) throw ConfigError("subject-grouped split needs at least 2 subjects");
    std::shuffle(subjects.begin(), subjects.end(), rng);
    const double want = val_fraction * static_cast<double>(n);
    std::set<std::string> val_subjects;
    std::size_t covered = 0;
    for (std::size_t i = 0; i + 1 < subjects.size() && static_cast<double>(covered) < want; ++i) {
      val_subjects.insert(subjects[i]);
      covered += static_cast<std::size_t>(std::count(ds.subject_ids.begin(), ds.subject_ids.end(), subjects[i]));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (val_subjects.count(ds.subject_ids[i])) fold.test.push_back(i);
    }
  }
  std::sort(fold.test.begin(), fold.test.end());
  fold.train = complement(n, fold.test);
  return fold;
}

std::vector<FoldSpec> kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) {
    throw ConfigError("kfold: k must be in [2, " + std::to_string(n) + "], got " + std::to_string(k));
  }
  Rng rng = make_stream(seed, "kfold");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<FoldSpec> folds;
  std::size_t start = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t size = n / k + (i < n % k ? 1 : 0);
    FoldSpec f;
    f.id = std::to_string(i);
    f.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                  perm.begin() + static_cast<std::ptrdiff_t>(start + size));
    std::sort(f.test.begin(), f.test.end());
    f.train = complement(n, f.test);
    folds.push_back(std::move(f));
    start += size;
  }
  return folds;
}

std::vector<FoldSpec> loso(const preprocess::WindowedDataset& ds) {
  const auto subjects = ds.subjects();
  if (subjects.size() < 2) {
    throw ConfigError("loso needs at least 2 subjects, got " + std::to_string(subjects.size()));
  }
  std::vector<FoldSpec> folds;
  for (const auto& s : subjects) {
    FoldSpec f;
    f.id = s;
    f.held_out_subject = s;
    for (std::size_t i = 0; i < ds.size(); ++i) (ds.subject_ids[i] == s ? f.test : f.train).push_back(i);
    folds.push_back(std::move(f));
  }
  return folds;
}

std::vector<FoldSpec> make_folds(const preprocess::WindowedDataset& ds, const ProtocolConfig& protocol,
                                 std::uint64_t seed) {
  switch (protocol.protocol) {
    case Protocol::holdout: return {split_train_val(ds, protocol.val_fraction, seed, protocol.grouping)};
    case Protocol::kfold: return kfold(ds.size(), protocol.k, seed);
    case Protocol::loso: return loso(ds);
  }
  throw ConfigError("unknown protocol");
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

std::uint64_t fold_seed(std::uint64_t master, const std::string& fold_id) {
  return derive_seed(master, "fold/" + fold_id);
}

CrossValReport run_cross_validation(const preprocess::WindowedDataset& ds, preprocess::NormScheme scheme,
                                    const model::ModelSpec& model_spec, const train::TrainConfig& train_cfg,
                                    const ProtocolConfig& protocol, std::uint64_t seed) {
  CrossValReport report;
  report.protocol = protocol.protocol;
  const auto folds = make_folds(ds, protocol, seed);
  std::vector<double> accs, f1s;
  for (const auto& fold : folds) {
    try {
      if (fold.train.empty() || fold.test.empty()) throw DataError("empty train or test side");
      if (protocol.protocol == Protocol::loso) {
        std::set<std::string> train_subjects;
        for (auto i : fold.train) train_subjects.insert(ds.subject_ids[i]);
        for (auto i : fold.test) {
          if (train_subjects.count(ds.subject_ids[i])) {
            throw std::logic_error("loso fold " + fold.id + " shares subject " + ds.subject_ids[i]);
          }
        }
      }
      FoldResult r;
      r.id = fold.id;
      r.held_out_subject = fold.held_out_subject;
      r.train_windows = fold.train.size();
      r.test_windows = fold.test.size();
      r.norm = preprocess::fit_normalizer(ds, fold.train, scheme);
      const auto normalized = preprocess::apply_normalizer(ds, r.norm);
      const auto train_set = normalized.subset(fold.train);
      const auto test_set = normalized.subset(fold.test);

      model::ModelSpec spec = model_spec;
      spec.channels = ds.channel_count();
      spec.window = ds.window_length;
      spec.classes = ds.label_map.size();
      spec.seed = fold_seed(seed, fold.id);
      train::TrainConfig cfg = train_cfg;
      cfg.seed = spec.seed;
      model::Model model(spec);
      r.history = train::train(model, train_set, &test_set, cfg);
      const auto pred = model::argmax_rows(model::infer_logits(model, test_set.windows), spec.classes);
      r.confusion = eval::confusion_matrix(test_set.labels, pred, ds.label_map);
      r.metrics = eval::compute_metrics(r.confusion);
      accs.push_back(r.metrics.accuracy);
      f1s.push_back(r.metrics.macro_f1);
      report.folds.push_back(std::move(r));
    } catch (const Error&) {
      rethrow_with_context("fold " + fold.id);
    }
  }
  std::tie(report.mean_accuracy, report.std_accuracy) = mean_std(accs);
  std::tie(report.mean_macro_f1, report.std_macro_f1) = mean_std(f1s);
  return report;
}

nlohmann::ordered_json to_json(const CrossValReport& report) {
  nlohmann::ordered_json j;
  j["protocol"] = to_string(report.protocol);
  auto& folds = j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) {
    nlohmann::ordered_json fj;
    fj["id"] = f.id;
    if (f.held_out_subject) fj["held_out_subject"] = *f.held_out_subject;
    fj["train_windows"] = f.train_windows;
    fj["test_windows"] = f.test_windows;
    fj["accuracy"] = f.metrics.accuracy;
    fj["macro_f1"] = f.metrics.macro_f1;
    if (!f.history.epochs.empty()) fj["final_train_loss"] = f.history.epochs.back().train_loss;
    folds.push_back(std::move(fj));
  }
  j["mean_accuracy"] = report.mean_accuracy;
  j["std_accuracy"] = report.std_accuracy;
  j["mean_macro_f1"] = report.mean_macro_f1;
  j["std_macro_f1"] = report.std_macro_f1;
  return j;
}

void SearchSpace::validate() const {
  if (budget < 1) throw ConfigError("search.budget must be >= 1");
  if (!(lr_min > 0.0 && lr_min <= lr_max)) throw ConfigError("search: need 0 < lr_min <= lr_max");
  if (batch.empty() || filters.empty() || hidden.empty() || label_smoothing.empty() || maxup.empty()) {
    throw ConfigError("search: every choice list must be non-empty");
  }
  for (auto b : batch)
    if (b < 1) throw ConfigError("search.batch choices must be >= 1");
  for (auto f : filters)
    if (f < 1) throw ConfigError("search.filters choices must be >= 1");
  for (auto h : hidden)
    if (h < 1) throw ConfigError("search.hidden choices must be >= 1");
  for (auto e : label_smoothing)
    if (!(e >= 0.0 && e < 1.0)) throw ConfigError("search.label_smoothing choices must be in [0, 1)");
}

nlohmann::ordered_json to_json(const SearchSpace& space) {
  return {{"budget", space.budget},   {"lr_min", space.lr_min},   {"lr_max", space.lr_max},
          {"batch", space.batch},     {"filters", space.filters}, {"hidden", space.hidden},
          {"label_smoothing", space.label_smoothing}, {"maxup", space.maxup}};
}

SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace s) {
  if (!j.is_object()) throw ConfigError("search: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "budget") s.budget = value.get<std::size_t>();
      else if (key == "lr_min") s.lr_min = value.get<double>();
      else if (key == "lr_max") s.lr_max = value.get<double>();
      else if (key == "batch") s.batch = value.get<std::vector<std::size_t>>();
      else if (key == "filters") s.filters = value.get<std::vector<std::size_t>>();
      else if (key == "hidden") s.hidden = value.get<std::vector<std::size_t>>();
      else if (key == "label_smoothing") s.label_smoothing = value.get<std::vector<double>>();
      else if (key == "maxup") s.maxup = value.get<std::vector<std::size_t>>();
      else throw ConfigError("search: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("search." + key + ": " + e.what());
    }
  }
  return s;
}

SearchResult random_search(const preprocess::WindowedDataset& ds, preprocess::NormScheme scheme,
                           const model::ModelSpec& base_model, const train::TrainConfig& base_train,
                           const SearchSpace& space, double val_fraction, Grouping grouping, std::uint64_t seed) {
  space.validate();
  const auto split = split_train_val(ds, val_fraction, seed, grouping);
  const auto norm = preprocess::fit_normalizer(ds, split.train, scheme);
  const auto normalized = preprocess::apply_normalizer(ds, norm);
  const auto train_set = normalized.subset(split.train);
  const auto val_set = normalized.subset(split.test);

  Rng rng = make_stream(seed, "search");
  std::uniform_real_distribution<double> log_lr(std::log(space.lr_min), std::log(space.lr_max));
  SearchResult result;
  for (std::size_t i = 0; i < space.budget; ++i) {
    Trial t;
    t.index = i;
    t.lr = space.lr_min == space.lr_max ? space.lr_min : std::exp(log_lr(rng));
    t.batch = pick(space.batch, rng);
    t.filters = pick(space.filters, rng);
    t.hidden = pick(space.hidden, rng);
    t.label_smoothing = pick(space.label_smoothing, rng);
    t.maxup = pick(space.maxup, rng);

    model::ModelSpec spec = base_model;
    spec.channels = ds.channel_count();
    spec.window = ds.window_length;
    spec.classes = ds.label_map.size();
    spec.filters = t.filters;
    spec.hidden = t.hidden;
    spec.seed = seed;
    train::TrainConfig cfg = base_train;
    cfg.adam.lr = t.lr;
    cfg.batch = t.batch;
    cfg.label_smoothing = t.label_smoothing;
    cfg.maxup = t.maxup;
    cfg.seed = seed;
    try {
      model::Model model(spec);
      train::train(model, train_set, nullptr, cfg);
      const auto pred = model::argmax_rows(model::infer_logits(model, val_set.windows), spec.classes);
      const auto report = eval::compute_metrics(eval::confusion_matrix(val_set.labels, pred, ds.label_map));
      t.val_accuracy = report.accuracy;
      t.val_macro_f1 = report.macro_f1;
    } catch (const Error&) {
      rethrow_with_context("trial " + std::to_string(i));
    }
    if (i == 0 || t.val_macro_f1 > result.trials[result.best].val_macro_f1) {
      result.best = i;
      result.best_model = spec;
      result.best_train = cfg;
    }
    result.trials.push_back(t);
  }
  return result;
}

std::string trials_csv(const SearchResult& result) {
  std::string out = "trial,lr,batch,filters,hidden,label_smoothing,maxup,val_accuracy,val_macro_f1,best\n";
  for (const auto& t : result.trials) {
    out += std::to_string(t.index) + "," + csv::format_double(t.lr) + "," + std::to_string(t.batch) + "," +
           std::to_string(t.filters) + "," + std::to_string(t.hidden) + "," + csv::format_double(t.label_smoothing) +
           "," + std::to_string(t.maxup) + "," + csv::format_double(t.val_accuracy) + "," +
           csv::format_double(t.val_macro_f1) + "," + (t.index == result.best ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace dlarc::validate
