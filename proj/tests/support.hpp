#pragma once

// Shared by the unit tests and the acceptance runner: hand-rolled random
// generators, the finite-difference gradient checker, the table of
// differentiable primitives it is run against, and scratch directories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dlarc/error.hpp"
#include "dlarc/ingest.hpp"
#include "dlarc/model.hpp"
#include "dlarc/ops.hpp"
#include "dlarc/preprocess.hpp"
#include "dlarc/rng.hpp"
#include "dlarc/tensor.hpp"

namespace dlarc::testing {

/// Small seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }
  /// Values with magnitude in [lo, hi] and random sign; keeps kinks (relu) out of reach of FD steps.
  std::vector<double> away_from_zero(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = (coin() ? 1.0 : -1.0) * real(lo, hi);
    return v;
  }
  std::vector<int> classes(std::size_t n, int k) {
    std::vector<int> v(n);
    for (auto& x : v) x = integer(0, k - 1);
    return v;
  }
  /// A random row-stochastic [rows, k] buffer.
  std::vector<double> distributions(std::size_t rows, std::size_t k) {
    std::vector<double> v(rows * k);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += v[r * k + j] = real(0.05, 1.0);
      for (std::size_t j = 0; j < k; ++j) v[r * k + j] /= s;
    }
    return v;
  }
  nc::Tensor tensor(nc::Shape shape, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    const std::size_t n = nc::numel(shape);
    return nc::Tensor(std::move(shape), reals(n, lo, hi), requires_grad);
  }
  Rng& engine() { return rng_; }

 private:
  Rng rng_;
};

/// ||a - b||_2 / max(||a||_2, ||b||_2); 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Scalar objective built from a graph of tensors.
using Objective = std::function<nc::Tensor()>;

/// Central differences with step h on every element of every tensor in
/// `wrt`, compared with the gradient backward() accumulates. Returns the
/// worst per-tensor relative error.
inline double fd_check(const Objective& objective, std::vector<nc::Tensor> wrt, double h = 1e-5) {
  for (auto& t : wrt) t.zero_grad();
  objective().backward();
  double worst = 0.0;
  for (auto& t : wrt) {
    const std::vector<double> analytic = t.grad();
    std::vector<double> numeric(t.numel());
    auto values = t.mutable_values();
    nc::NoGradGuard guard;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double x = values[i];
      values[i] = x + h;
      const double up = objective().item();
      values[i] = x - h;
      const double down = objective().item();
      values[i] = x;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

/// sum(out * r) for a fixed random r: every output element gets a distinct weight.
inline nc::Tensor weighted_sum(const nc::Tensor& out, const nc::Tensor& r) { return nc::sum(nc::mul(out, r)); }

struct PrimitiveCase {
  std::string name;
  /// Draws shapes and inputs; returns the objective and the tensors to differentiate.
  std::function<std::pair<Objective, std::vector<nc::Tensor>>(Gen&)> build;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  using nc::Shape;
  using nc::Tensor;
  using Built = std::pair<Objective, std::vector<Tensor>>;
  auto dims = [](Gen& g, std::size_t rank) {
    Shape s(rank);
    for (auto& d : s) d = g.size(1, 6);
    return s;
  };
  auto unary = [dims](std::function<Tensor(const Tensor&)> op, double lo, double hi, bool signed_gap) {
    return [=](Gen& g) -> Built {
      const Shape s = dims(g, g.size(1, 4));
      const std::size_t n = nc::numel(s);
      Tensor a(s, signed_gap ? g.away_from_zero(n, lo, hi) : g.reals(n, lo, hi), true);
      Tensor out = op(a);
      Tensor r = g.tensor(out.shape(), -1.0, 1.0, false);
      return {[=] { return weighted_sum(op(a), r); }, {a}};
    };
  };
  auto binary = [dims](std::function<Tensor(const Tensor&, const Tensor&)> op) {
    return [=](Gen& g) -> Built {
      const Shape s = dims(g, g.size(1, 4));
      Tensor a = g.tensor(s), b = g.tensor(s);
      Tensor r = g.tensor(s, -1.0, 1.0, false);
      return {[=] { return weighted_sum(op(a, b), r); }, {a, b}};
    };
  };

  std::vector<PrimitiveCase> cases;
  cases.push_back({"add", binary([](const Tensor& a, const Tensor& b) { return nc::add(a, b); })});
  cases.push_back({"sub", binary([](const Tensor& a, const Tensor& b) { return nc::sub(a, b); })});
  cases.push_back({"mul", binary([](const Tensor& a, const Tensor& b) { return nc::mul(a, b); })});
  cases.push_back({"scale", unary([](const Tensor& a) { return nc::scale(a, -1.7); }, -1.0, 1.0, false)});
  cases.push_back({"tanh", unary([](const Tensor& a) { return nc::tanh(a); }, -2.0, 2.0, false)});
  cases.push_back({"logistic", unary([](const Tensor& a) { return nc::logistic(a); }, -3.0, 3.0, false)});
  cases.push_back({"relu", unary([](const Tensor& a) { return nc::relu(a); }, 0.05, 1.0, true)});
  cases.push_back({"sum", [dims](Gen& g) -> Built {
                     Tensor a = g.tensor(dims(g, g.size(1, 4)));
                     return {[=] { return nc::scale(nc::sum(nc::mul(a, a)), 0.5); }, {a}};
                   }});
  cases.push_back({"reshape", [dims](Gen& g) -> Built {
                     const Shape s = dims(g, 3);
                     Tensor a = g.tensor(s);
                     const Shape flat{s[0], s[1] * s[2]};
                     Tensor r = g.tensor(flat, -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::reshape(a, flat), r); }, {a}};
                   }});
  cases.push_back({"transpose", [dims](Gen& g) -> Built {
                     const Shape s = dims(g, 4);
                     const std::size_t a0 = g.size(0, 3), a1 = (a0 + g.size(1, 3)) % 4;
                     Tensor a = g.tensor(s);
                     Tensor r = g.tensor(nc::transpose(a, a0, a1).shape(), -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::transpose(a, a0, a1), r); }, {a}};
                   }});
  cases.push_back({"slice", [dims](Gen& g) -> Built {
                     const Shape s = dims(g, 3);
                     const std::size_t axis = g.size(0, 2);
                     const std::size_t begin = g.size(0, s[axis] - 1), end = g.size(begin + 1, s[axis]);
                     Tensor a = g.tensor(s);
                     Tensor r = g.tensor(nc::slice(a, axis, begin, end).shape(), -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::slice(a, axis, begin, end), r); }, {a}};
                   }});
  cases.push_back({"select", [dims](Gen& g) -> Built {
                     const Shape s = dims(g, 3);
                     const std::size_t axis = g.size(0, 2), index = g.size(0, s[axis] - 1);
                     Tensor a = g.tensor(s);
                     Tensor r = g.tensor(nc::select(a, axis, index).shape(), -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::select(a, axis, index), r); }, {a}};
                   }});
  cases.push_back({"concat", [dims](Gen& g) -> Built {
                     Shape s = dims(g, 3);
                     const std::size_t axis = g.size(0, 2);
                     Tensor a = g.tensor(s);
                     s[axis] = g.size(1, 6);
                     Tensor b = g.tensor(s);
                     const std::vector<Tensor> parts{a, b};
                     Tensor r = g.tensor(nc::concat(parts, axis).shape(), -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::concat(parts, axis), r); }, {a, b}};
                   }});
  cases.push_back({"conv_temporal", [](Gen& g) -> Built {
                     const std::size_t B = g.size(1, 4), Fi = g.size(1, 4), Fo = g.size(1, 5), K = g.size(1, 4);
                     const std::size_t T = g.size(K, 6), C = g.size(1, 3);
                     Tensor x = g.tensor({B, Fi, T, C}), w = g.tensor({Fo, Fi, K, 1}), b = g.tensor({Fo});
                     Tensor r = g.tensor({B, Fo, T - K + 1, C}, -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::conv_temporal(x, w, b), r); }, {x, w, b}};
                   }});
  cases.push_back({"dense", [](Gen& g) -> Built {
                     const std::size_t B = g.size(1, 6), D = g.size(1, 6), K = g.size(1, 6);
                     Tensor x = g.tensor({B, D}), w = g.tensor({K, D}), b = g.tensor({K});
                     Tensor r = g.tensor({B, K}, -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::dense(x, w, b), r); }, {x, w, b}};
                   }});
  cases.push_back({"lstm_preactivation", [](Gen& g) -> Built {
                     const std::size_t B = g.size(1, 4), D = g.size(1, 5), H = g.size(1, 4);
                     Tensor x = g.tensor({B, D}), h = g.tensor({B, H});
                     nc::LstmParams p{g.tensor({4 * H, D}), g.tensor({4 * H, H}), g.tensor({4 * H})};
                     Tensor r = g.tensor({B, 4 * H}, -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::lstm_preactivation(x, h, p), r); }, {x, h, p.w_ih, p.w_hh, p.bias}};
                   }});
  cases.push_back({"lstm_cell_state", [](Gen& g) -> Built {
                     const std::size_t B = g.size(1, 4), H = g.size(1, 4);
                     Tensor pre = g.tensor({B, 4 * H}, -2.0, 2.0), c = g.tensor({B, H});
                     Tensor r = g.tensor({B, H}, -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::lstm_cell_state(pre, c), r); }, {pre, c}};
                   }});
  cases.push_back({"lstm_hidden", [](Gen& g) -> Built {
                     const std::size_t B = g.size(1, 4), H = g.size(1, 4);
                     Tensor pre = g.tensor({B, 4 * H}, -2.0, 2.0), c = g.tensor({B, H}, -2.0, 2.0);
                     Tensor r = g.tensor({B, H}, -1.0, 1.0, false);
                     return {[=] { return weighted_sum(nc::lstm_hidden(pre, c), r); }, {pre, c}};
                   }});
  cases.push_back({"lstm_step_bptt", [](Gen& g) -> Built {
                     const std::size_t B = g.size(1, 3), D = g.size(1, 4), H = g.size(1, 4), steps = g.size(2, 4);
                     std::vector<Tensor> xs;
                     for (std::size_t s = 0; s < steps; ++s) xs.push_back(g.tensor({B, D}));
                     nc::LstmParams p{g.tensor({4 * H, D}), g.tensor({4 * H, H}), g.tensor({4 * H})};
                     Tensor h0 = g.tensor({B, H}), c0 = g.tensor({B, H});
                     Tensor r = g.tensor({B, H}, -1.0, 1.0, false);
                     std::vector<Tensor> wrt{p.w_ih, p.w_hh, p.bias, h0, c0};
                     wrt.insert(wrt.end(), xs.begin(), xs.end());
                     return {[=] {
                               nc::LstmState st{h0, c0};
                               for (const auto& x : xs) st = nc::lstm_step(x, st, p);
                               return nc::add(weighted_sum(st.h, r), weighted_sum(st.c, r));
                             },
                             wrt};
                   }});
  cases.push_back({"softmax_cross_entropy", [](Gen& g) -> Built {
                     const std::size_t B = g.size(1, 6), K = g.size(2, 6);
                     Tensor logits = g.tensor({B, K}, -3.0, 3.0);
                     Tensor target({B, K}, g.distributions(B, K));
                     return {[=] { return nc::softmax_cross_entropy(logits, target); }, {logits}};
                   }});
  return cases;
}

/// The small architecture used for whole-model gradient checks.
inline model::ModelSpec tiny_spec(std::uint64_t seed) {
  model::ModelSpec s;
  s.channels = 2;
  s.window = 12;
  s.conv_layers = 1;
  s.filters = 3;
  s.kernel = 3;
  s.hidden = 4;
  s.classes = 2;
  s.seed = seed;
  return s;
}

/// Worst relative error over every parameter tensor and the input batch of
/// the tiny model under softmax cross-entropy with smoothed-looking targets.
inline double tiny_model_fd(std::uint64_t seed) {
  Gen g(seed);
  const auto spec = tiny_spec(seed);
  model::Model m(spec);
  const std::size_t B = g.size(1, 3);
  nc::Tensor batch = g.tensor({B, spec.window, spec.channels}, -2.0, 2.0);
  nc::Tensor target({B, spec.classes}, g.distributions(B, spec.classes));
  std::vector<nc::Tensor> wrt = m.parameters();
  wrt.push_back(batch);
  return fd_check([&] { return nc::softmax_cross_entropy(m.forward(batch), target); }, wrt);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dlarc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Uniformly sampled single-subject recording with the given values (T x C).
inline ingest::SensorRecording make_recording(std::string subject, std::size_t C, std::vector<double> values,
                                              std::vector<int> labels, double rate = 1.0) {
  ingest::SensorRecording r;
  r.subject_id = std::move(subject);
  const std::size_t T = labels.size();
  for (std::size_t c = 0; c < C; ++c) r.channels.push_back("ch" + std::to_string(c));
  for (std::size_t t = 0; t < T; ++t) r.timestamps.push_back(static_cast<double>(t) / rate);
  r.samples = std::move(values);
  r.labels = std::move(labels);
  r.missing.assign(T * C, 0);
  return r;
}

}  // namespace dlarc::testing
