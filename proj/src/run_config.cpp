#include "dlarc/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dlarc/error.hpp"

namespace dlarc::cli {

namespace {

using json = nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

template <typename T>
T get(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void read_synthetic(const json& j, ingest::SyntheticSpec& s) {
  require_object(j, "data.synthetic");
  for (const auto& [key, v] : j.items()) {
    const std::string where = "data.synthetic." + key;
    if (key == "subjects") s.subjects = get<std::size_t>(v, where);
    else if (key == "classes") s.classes = get<std::size_t>(v, where);
    else if (key == "rate") s.rate = get<double>(v, where);
    else if (key == "bout_seconds") s.bout_seconds = get<double>(v, where);
    else if (key == "bouts_per_class") s.bouts_per_class = get<std::size_t>(v, where);
    else if (key == "channels") s.channel_count = get<std::size_t>(v, where);
    else throw ConfigError("data.synthetic: unknown key '" + key + "'");
  }
}

void read_data(const json& j, DataConfig& d) {
  require_object(j, "data");
  for (const auto& [key, v] : j.items()) {
    if (key == "source") {
      const auto s = get<std::string>(v, "data.source");
      if (s != "synthetic" && s != "directory") {
        throw ConfigError("data.source must be synthetic or directory, got '" + s + "'");
      }
      d.use_synthetic = s == "synthetic";
    } else if (key == "directory") {
      d.directory = get<std::string>(v, "data.directory");
    } else if (key == "labels") {
      d.labels = get<std::vector<std::string>>(v, "data.labels");
    } else if (key == "synthetic") {
      read_synthetic(v, d.synthetic);
    } else {
      throw ConfigError("data: unknown key '" + key + "'");
    }
  }
}

void read_preprocess(const json& j, PreprocessConfig& p) {
  require_object(j, "preprocess");
  for (const auto& [key, v] : j.items()) {
    const std::string where = "preprocess." + key;
    if (key == "target_rate") p.target_rate = get<double>(v, where);
    else if (key == "window_seconds") p.window_seconds = get<double>(v, where);
    else if (key == "overlap") p.overlap = get<double>(v, where);
    else if (key == "normalization") p.normalization = preprocess::parse_norm_scheme(get<std::string>(v, where));
    else if (key == "labeling") p.labeling = preprocess::parse_labeling(get<std::string>(v, where));
    else throw ConfigError("preprocess: unknown key '" + key + "'");
  }
}

void read_model(const json& j, model::ModelSpec& m) {
  require_object(j, "model");
  for (const auto& [key, v] : j.items()) {
    const std::string where = "model." + key;
    if (key == "conv_layers") m.conv_layers = get<std::size_t>(v, where);
    else if (key == "filters") m.filters = get<std::size_t>(v, where);
    else if (key == "kernel") m.kernel = get<std::size_t>(v, where);
    else if (key == "hidden") m.hidden = get<std::size_t>(v, where);
    else if (key == "lstm_layers") m.lstm_layers = get<std::size_t>(v, where);
    else throw ConfigError("model: unknown key '" + key + "'");
  }
}

void read_validation(const json& j, validate::ProtocolConfig& p) {
  require_object(j, "validation");
  for (const auto& [key, v] : j.items()) {
    const std::string where = "validation." + key;
    if (key == "protocol") p.protocol = validate::parse_protocol(get<std::string>(v, where));
    else if (key == "k") p.k = get<std::size_t>(v, where);
    else if (key == "val_fraction") p.val_fraction = get<double>(v, where);
    else if (key == "grouping") p.grouping = validate::parse_grouping(get<std::string>(v, where));
    else throw ConfigError("validation: unknown key '" + key + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (!data.use_synthetic && data.directory.empty()) throw ConfigError("data.directory is required for source=directory");
  if (data.use_synthetic) {
    const auto& s = data.synthetic;
    if (s.subjects < 1 || s.classes < 2 || s.channel_count < 1 || s.bouts_per_class < 1) {
      throw ConfigError("data.synthetic: need subjects >= 1, classes >= 2, channels >= 1, bouts_per_class >= 1");
    }
    if (!(s.rate > 0.0) || !(s.bout_seconds > 0.0)) throw ConfigError("data.synthetic: rate and bout_seconds must be > 0");
  }
  if (!(preprocess.target_rate > 0.0)) throw ConfigError("preprocess.target_rate must be > 0");
  if (!(preprocess.window_seconds > 0.0)) throw ConfigError("preprocess.window_seconds must be > 0");
  if (!(preprocess.overlap >= 0.0 && preprocess.overlap < 1.0)) throw ConfigError("preprocess.overlap must be in [0, 1)");
  if (window_samples() < 1) throw ConfigError("preprocess: window is shorter than one sample");
  if (model.conv_layers < 1 || model.filters < 1 || model.kernel < 1 || model.hidden < 1 || model.lstm_layers < 1) {
    throw ConfigError("model: every size must be >= 1");
  }
  if (model.conv_layers * (model.kernel - 1) >= window_samples()) {
    throw ConfigError("model: " + std::to_string(model.conv_layers) + " convolutions of width " +
                      std::to_string(model.kernel) + " leave no time steps in a window of " +
                      std::to_string(window_samples()) + " samples");
  }
  train.validate();
  if (!(validation.val_fraction > 0.0 && validation.val_fraction < 1.0)) {
    throw ConfigError("validation.val_fraction must be in (0, 1)");
  }
  if (validation.k < 2) throw ConfigError("validation.k must be >= 2");
  search.validate();
  label_map();
}

ingest::LabelMap RunConfig::label_map() const {
  if (!data.labels.empty()) {
    try {
      return ingest::LabelMap(data.labels);
    } catch (const Error& e) {
      throw ConfigError(std::string("data.labels: ") + e.what());
    }
  }
  return data.use_synthetic ? ingest::LabelMap::first_n(data.synthetic.classes) : ingest::LabelMap::rwhar();
}

std::size_t RunConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(preprocess.window_seconds * preprocess.target_rate));
}

std::size_t RunConfig::stride_samples() const {
  const auto s = std::llround(static_cast<double>(window_samples()) * (1.0 - preprocess.overlap));
  return s < 1 ? 1 : static_cast<std::size_t>(s);
}

RunConfig run_config_from_json(const nlohmann::json& root) {
  require_object(root, "config");
  const json& j = root.contains("config") && root.contains("command") ? root.at("config") : root;
  require_object(j, "config");
  RunConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") cfg.seed = get<std::uint64_t>(v, "seed");
    else if (key == "data") read_data(v, cfg.data);
    else if (key == "preprocess") read_preprocess(v, cfg.preprocess);
    else if (key == "model") read_model(v, cfg.model);
    else if (key == "train") cfg.train = train::train_config_from_json(v, cfg.train);
    else if (key == "validation") read_validation(v, cfg.validation);
    else if (key == "search") cfg.search = validate::search_space_from_json(v, cfg.search);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  const auto& s = cfg.data.synthetic;
  j["data"] = {{"source", cfg.data.use_synthetic ? "synthetic" : "directory"},
               {"directory", cfg.data.directory},
               {"labels", cfg.label_map().names()},
               {"synthetic",
                {{"subjects", s.subjects},
                 {"classes", s.classes},
                 {"rate", s.rate},
                 {"bout_seconds", s.bout_seconds},
                 {"bouts_per_class", s.bouts_per_class},
                 {"channels", s.channel_count}}}};
  j["preprocess"] = {{"target_rate", cfg.preprocess.target_rate},
                     {"window_seconds", cfg.preprocess.window_seconds},
                     {"overlap", cfg.preprocess.overlap},
                     {"normalization", preprocess::to_string(cfg.preprocess.normalization)},
                     {"labeling", preprocess::to_string(cfg.preprocess.labeling)}};
  j["model"] = {{"conv_layers", cfg.model.conv_layers},
                {"filters", cfg.model.filters},
                {"kernel", cfg.model.kernel},
                {"hidden", cfg.model.hidden},
                {"lstm_layers", cfg.model.lstm_layers}};
  j["train"] = train::to_json(cfg.train);
  j["validation"] = {{"protocol", validate::to_string(cfg.validation.protocol)},
                     {"k", cfg.validation.k},
                     {"val_fraction", cfg.validation.val_fraction},
                     {"grouping", validate::to_string(cfg.validation.grouping)}};
  j["search"] = validate::to_json(cfg.search);
  return j;
}

}  // namespace dlarc::cli
