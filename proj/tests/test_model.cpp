#include <doctest.h>

#include "dlarc/param_io.hpp"
#include "support.hpp"

using namespace dlarc;
using dlarc::testing::Gen;
using nc::Tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

model::ModelSpec small_spec(std::uint64_t seed = 0) {
  model::ModelSpec s;
  s.channels = 3;
  s.window = 20;
  s.classes = 4;
  s.conv_layers = 2;
  s.filters = 5;
  s.kernel = 3;
  s.hidden = 6;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("tiny model matches central differences on 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      INFO("seed " << seed);
      CHECK(testing::tiny_model_fd(seed) < 1e-4);
    }
  }

  TEST_CASE("parameter count") {
    model::ModelSpec s;
    s.channels = 3;
    s.classes = 8;
    CHECK(model::parameter_count(s) == 227400);
    CHECK(model::Model(s).buffer_size() == 227400);

    Gen g(4);
    for (int i = 0; i < 50; ++i) {
      model::ModelSpec r;
      r.channels = g.size(1, 6);
      r.classes = g.size(2, 9);
      r.conv_layers = g.size(1, 4);
      r.filters = g.size(1, 12);
      r.kernel = g.size(1, 6);
      r.hidden = g.size(1, 16);
      r.window = r.conv_layers * (r.kernel - 1) + g.size(1, 8);
      r.seed = i;
      CHECK(model::parameter_count(r) == model::Model(r).buffer_size());
    }
  }

  TEST_CASE("spec validation") {
    model::ModelSpec s;
    s.window = 16;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(model::Model{s}, ConfigError);
    s.window = 17;
    CHECK_NOTHROW(s.validate());
    s.hidden = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }

  TEST_CASE("initialization") {
    const auto spec = small_spec(42);
    model::Model a(spec), b(spec);
    REQUIRE(a.named_parameters().size() == b.named_parameters().size());
    for (std::size_t i = 0; i < a.named_parameters().size(); ++i) {
      CHECK(vals(a.named_parameters()[i].second) == vals(b.named_parameters()[i].second));
    }
    auto other = spec;
    other.seed = 43;
    CHECK(vals(model::Model(other).named_parameters()[0].second) != vals(a.named_parameters()[0].second));

    // Biases zero except the LSTM forget gate, which is 1.
    for (const auto& [name, t] : a.named_parameters()) {
      if (name.find("bias") == std::string::npos) continue;
      const auto v = vals(t);
      if (name.rfind("lstm", 0) == 0) {
        const std::size_t H = spec.hidden;
        REQUIRE(v.size() == 4 * H);
        for (std::size_t j = 0; j < 4 * H; ++j) CHECK(v[j] == (j >= H && j < 2 * H ? 1.0 : 0.0));
      } else {
        for (double x : v) CHECK(x == 0.0);
      }
    }
  }

  TEST_CASE("forward shape and purity") {
    model::ModelSpec s;
    s.channels = 3;
    s.classes = 8;
    model::Model m(s);
    Gen g(1);
    Tensor batch = g.tensor({2, 50, 3}, -2, 2, false);
    const auto l1 = m.forward(batch);
    CHECK(l1.shape() == nc::Shape{2, 8});
    for (double v : l1.values()) CHECK(std::isfinite(v));
    CHECK(vals(m.forward(batch)) == vals(l1));
    CHECK_THROWS_AS(m.forward(g.tensor({2, 49, 3})), ShapeError);
  }

  TEST_CASE("batch independence is exact") {
    Gen g(8);
    for (int trial = 0; trial < 5; ++trial) {
      model::ModelSpec s;
      s.channels = g.size(1, 4);
      s.classes = g.size(2, 8);
      s.seed = trial;
      if (trial % 2) s = small_spec(trial);
      model::Model m(s);
      const std::size_t B = g.size(2, 70);
      const std::size_t ws = s.window * s.channels;
      const auto data = g.reals(B * ws, -2, 2);
      const auto all = vals(m.forward(Tensor({B, s.window, s.channels}, data)));
      for (std::size_t i = 0; i < B; i += 1 + B / 4) {
        Tensor one({1, s.window, s.channels}, std::vector<double>(data.begin() + i * ws, data.begin() + (i + 1) * ws));
        const auto row = vals(m.forward(one));
        CHECK(row == std::vector<double>(all.begin() + i * s.classes, all.begin() + (i + 1) * s.classes));
      }
      CHECK(model::infer_logits(m, data, 7) == all);
    }
  }

  TEST_CASE("predict") {
    CHECK(model::argmax_rows(std::vector<double>{0.1, 0.9, 0.0}, 3) == std::vector<int>{1});
    CHECK(model::argmax_rows(std::vector<double>{0.5, 0.5}, 2) == std::vector<int>{0});

    const auto spec = small_spec(3);
    model::Model m(spec);
    Gen g(2);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t B = g.size(1, 9);
      Tensor batch = g.tensor({B, spec.window, spec.channels}, -2, 2, false);
      const auto logits = vals(m.forward(batch));
      const auto pred = model::predict(m, batch);
      REQUIRE(pred.size() == B);
      for (std::size_t b = 0; b < B; ++b) {
        int best = 0;
        for (std::size_t k = 1; k < spec.classes; ++k) {
          if (logits[b * spec.classes + k] > logits[b * spec.classes + best]) best = static_cast<int>(k);
        }
        CHECK(pred[b] == best);
      }
      // Adding a constant to a row leaves the prediction unchanged.
      auto shifted = logits;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < spec.classes; ++k) shifted[b * spec.classes + k] += 0.25 * double(b + 1);
      CHECK(model::argmax_rows(shifted, spec.classes) == pred);
    }
  }

  TEST_CASE("clone, load and save") {
    const auto spec = small_spec(5);
    model::Model m(spec);
    model::Model c = m.clone();
    c.named_parameters()[0].second.data()->values[0] += 1.0;
    CHECK(vals(c.named_parameters()[0].second) != vals(m.named_parameters()[0].second));

    const auto dir = testing::scratch_dir("model_io");
    nc::save_params(dir / "w.csv", m.named_parameters());
    model::Model fresh(small_spec(99));
    fresh.load(nc::load_params(dir / "w.csv"));
    Gen g(6);
    Tensor batch = g.tensor({3, spec.window, spec.channels}, -1, 1, false);
    CHECK(vals(fresh.forward(batch)) == vals(m.forward(batch)));

    auto bad = nc::load_params(dir / "w.csv");
    bad.pop_back();
    CHECK_THROWS_AS(fresh.load(bad), DataError);

    CHECK(model::model_spec_from_json(model::to_json(spec)).hidden == spec.hidden);
  }
}
