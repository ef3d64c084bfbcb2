#include "dlarc/model.hpp"

#include <cmath>
#include <random>

#include "dlarc/error.hpp"
#include "dlarc/ops.hpp"
#include "dlarc/rng.hpp"

namespace dlarc::model {

using nc::Tensor;

void ModelSpec::validate() const {
  if (channels < 1 || window < 1 || classes < 2 || conv_layers < 1 || filters < 1 || kernel < 1 || hidden < 1 ||
      lstm_layers < 1) {
    throw ConfigError("model spec: all counts must be >= 1 (classes >= 2)");
  }
  if (window <= conv_layers * (kernel - 1)) {
    throw ConfigError("model spec: window " + std::to_string(window) + " too short for " +
                      std::to_string(conv_layers) + " convolutions of length " + std::to_string(kernel));
  }
}

std::size_t parameter_count(const ModelSpec& s) {
  const std::size_t F = s.filters, Kt = s.kernel, H = s.hidden;
  std::size_t n = (F * Kt + F) + (s.conv_layers - 1) * (F * F * Kt + F);
  std::size_t d = F * s.channels;
  for (std::size_t l = 0; l < s.lstm_layers; ++l) {
    n += 4 * (H * d + H * H + H);
    d = H;
  }
  return n + H * s.classes + s.classes;
}

nlohmann::ordered_json to_json(const ModelSpec& s) {
  return {{"channels", s.channels},         {"window", s.window}, {"classes", s.classes},
          {"conv_layers", s.conv_layers},   {"filters", s.filters}, {"kernel", s.kernel},
          {"hidden", s.hidden},             {"lstm_layers", s.lstm_layers}, {"seed", s.seed}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.channels = j.at("channels").get<std::size_t>();
  s.window = j.at("window").get<std::size_t>();
  s.classes = j.at("classes").get<std::size_t>();
  s.conv_layers = j.value("conv_layers", s.conv_layers);
  s.filters = j.value("filters", s.filters);
  s.kernel = j.value("kernel", s.kernel);
  s.hidden = j.value("hidden", s.hidden);
  s.lstm_layers = j.value("lstm_layers", s.lstm_layers);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

namespace {

Tensor glorot(nc::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(nc::numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

Model::Model(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng rng = make_stream(spec_.seed, "init");
  const std::size_t F = spec_.filters, Kt = spec_.kernel, H = spec_.hidden;
  for (std::size_t l = 0; l < spec_.conv_layers; ++l) {
    const std::size_t fin = l == 0 ? 1 : F;
    const std::string p = "conv" + std::to_string(l + 1);
    params_.emplace_back(p + ".weight", glorot({F, fin, Kt, 1}, fin * Kt, F * Kt, rng));
    params_.emplace_back(p + ".bias", Tensor({F}, true));
  }
  std::size_t d = F * spec_.channels;
  for (std::size_t l = 0; l < spec_.lstm_layers; ++l) {
    const std::string p = "lstm" + std::to_string(l + 1);
    params_.emplace_back(p + ".w_ih", glorot({4 * H, d}, d, 4 * H, rng));
    params_.emplace_back(p + ".w_hh", glorot({4 * H, H}, H, 4 * H, rng));
    Tensor bias({4 * H}, true);
    for (std::size_t j = H; j < 2 * H; ++j) bias.mutable_values()[j] = 1.0;
    params_.emplace_back(p + ".bias", bias);
    d = H;
  }
  params_.emplace_back("fc.weight", glorot({spec_.classes, H}, H, spec_.classes, rng));
  params_.emplace_back("fc.bias", Tensor({spec_.classes}, true));
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [_, t] : params_) out.push_back(t);
  return out;
}

std::size_t Model::buffer_size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

Tensor Model::forward(const Tensor& batch) const {
  if (!batch.defined() || batch.rank() != 3 || batch.dim(1) != spec_.window || batch.dim(2) != spec_.channels) {
    throw ShapeError("model: batch must be [B, " + std::to_string(spec_.window) + ", " +
                     std::to_string(spec_.channels) + "], got " +
                     (batch.defined() ? nc::to_string(batch.shape()) : std::string("undefined")));
  }
  const std::size_t B = batch.dim(0), C = spec_.channels, F = spec_.filters, H = spec_.hidden;
  std::size_t p = 0;
  Tensor x = nc::reshape(batch, {B, 1, spec_.window, C});
  for (std::size_t l = 0; l < spec_.conv_layers; ++l, p += 2) {
    x = nc::relu(nc::conv_temporal(x, params_[p].second, params_[p + 1].second));
  }
  const std::size_t steps = spec_.lstm_steps();
  // [B, F, T', C] -> [B, T', F*C]
  Tensor seq = nc::reshape(nc::transpose(x, 1, 2), {B, steps, F * C});
  std::vector<Tensor> inputs;
  inputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) inputs.push_back(nc::select(seq, 1, t));

  for (std::size_t l = 0; l < spec_.lstm_layers; ++l, p += 3) {
    const nc::LstmParams lp{params_[p].second, params_[p + 1].second, params_[p + 2].second};
    nc::LstmState state{Tensor({B, H}), Tensor({B, H})};
    for (std::size_t t = 0; t < steps; ++t) {
      state = nc::lstm_step(inputs[t], state, lp);
      inputs[t] = state.h;
    }
  }
  return nc::dense(inputs.back(), params_[p].second, params_[p + 1].second);
}

Model Model::clone() const {
  Model copy = *this;
  for (auto& [_, t] : copy.params_) t = Tensor(t.shape(), std::vector<double>(t.values().begin(), t.values().end()), true);
  return copy;
}

void Model::load(const std::vector<nc::NamedTensor>& params) {
  if (params.size() != params_.size()) {
    throw DataError("model: expected " + std::to_string(params_.size()) + " parameter tensors, got " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != params_[i].first) {
      throw DataError("model: parameter " + std::to_string(i) + " is '" + params[i].first + "', expected '" +
                      params_[i].first + "'");
    }
    if (params[i].second.shape() != params_[i].second.shape()) {
      throw DataError("model: parameter '" + params[i].first + "' has shape " +
                      nc::to_string(params[i].second.shape()) + ", expected " +
                      nc::to_string(params_[i].second.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto src = params[i].second.values();
    std::copy(src.begin(), src.end(), params_[i].second.mutable_values().begin());
  }
}

void Model::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

std::vector<int> argmax_rows(std::span<const double> logits, std::size_t k) {
  if (k == 0 || logits.size() % k != 0) throw ShapeError("argmax_rows: buffer is not [rows, k]");
  std::vector<int> out(logits.size() / k);
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[r * k + j] > logits[r * k + best]) best = j;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Model& model, const Tensor& batch) {
  nc::NoGradGuard guard;
  Tensor logits = model.forward(batch);
  return argmax_rows(logits.values(), model.spec().classes);
}

std::vector<double> infer_logits(const Model& model, std::span<const double> windows, std::size_t batch) {
  const auto& s = model.spec();
  const std::size_t ws = s.window * s.channels;
  if (ws == 0 || windows.size() % ws != 0) throw ShapeError("infer_logits: buffer is not [n, W, C]");
  if (batch == 0) batch = 1;
  const std::size_t n = windows.size() / ws;
  std::vector<double> out;
  out.reserve(n * s.classes);
  nc::NoGradGuard guard;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t b = std::min(batch, n - start);
    auto chunk = windows.subspan(start * ws, b * ws);
    Tensor x({b, s.window, s.channels}, std::vector<double>(chunk.begin(), chunk.end()));
    Tensor logits = model.forward(x);
    out.insert(out.end(), logits.values().begin(), logits.values().end());
  }
  return out;
}

}  // namespace dlarc::model
