#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "support.hpp"

using namespace dlarc;
using namespace dlarc::preprocess;
using dlarc::testing::Gen;

namespace {

std::vector<double> channel(const ingest::SensorRecording& r, std::size_t c) {
  std::vector<double> v(r.length());
  for (std::size_t t = 0; t < r.length(); ++t) v[t] = r.value(t, c);
  return v;
}

}  // namespace

TEST_SUITE("preprocess") {
  TEST_CASE("window count formula against brute force") {
    Gen g(101);
    for (int i = 0; i < 1000; ++i) {
      const std::size_t T = g.size(1, 500), W = g.size(1, T), S = g.size(1, T);
      INFO(T << " " << W << " " << S);
      CHECK(window_count(T, W, S) == testing::brute_window_count(T, W, S));
    }
    CHECK(window_count(10, 11, 1) == 0);
  }

  TEST_CASE("sliding window hand cases") {
    const auto labels = ingest::LabelMap::rwhar();
    std::vector<double> v(100);
    for (std::size_t i = 0; i < 100; ++i) v[i] = double(i);
    const auto rec = testing::make_recording("s", 1, v, std::vector<int>(100, 0));
    const std::vector<ingest::SensorRecording> recs{rec};
    const auto ds = sliding_windows(recs, 50, 25, Labeling::majority, labels);
    REQUIRE(ds.size() == 3);
    CHECK(ds.window(0)[0] == 0.0);
    CHECK(ds.window(1)[0] == 25.0);
    CHECK(ds.window(2)[0] == 50.0);
    CHECK(sliding_windows(recs, 100, 7, Labeling::majority, labels).size() == 1);
    CHECK(sliding_windows(recs, 101, 7, Labeling::majority, labels).size() == 0);

    std::vector<int> lab(50, 1);
    for (std::size_t i = 26; i < 50; ++i) lab[i] = 4;
    const std::vector<ingest::SensorRecording> walk{testing::make_recording("s", 1, std::vector<double>(50), lab)};
    CHECK(sliding_windows(walk, 50, 1, Labeling::majority, labels).labels[0] == 1);
    CHECK(sliding_windows(walk, 50, 1, Labeling::last_sample, labels).labels[0] == 4);

    std::vector<int> tie(4, 3);
    tie[2] = tie[3] = 2;
    const std::vector<ingest::SensorRecording> t2{testing::make_recording("s", 1, std::vector<double>(4), tie)};
    CHECK(sliding_windows(t2, 4, 1, Labeling::majority, labels).labels[0] == 2);
  }

  TEST_CASE("windows never span recordings") {
    Gen g(7);
    const auto labels = ingest::LabelMap::first_n(3);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<ingest::SensorRecording> recs;
      std::size_t expected = 0;
      const std::size_t W = g.size(1, 10), S = g.size(1, 10);
      for (std::size_t r = 0, n = g.size(1, 4); r < n; ++r) {
        const std::size_t T = g.size(1, 40);
        // Each value encodes (recording, time) so a window's origin is recoverable.
        std::vector<double> v(T);
        for (std::size_t t = 0; t < T; ++t) v[t] = double(r * 1000 + t);
        recs.push_back(testing::make_recording("subj" + std::to_string(r), 1, v, g.classes(T, 3)));
        expected += testing::brute_window_count(T, W, S);
      }
      const auto ds = sliding_windows(recs, W, S, Labeling::majority, labels);
      REQUIRE(ds.size() == expected);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto w = ds.window(i);
        const std::size_t r = static_cast<std::size_t>(w[0]) / 1000;
        CHECK(ds.subject_ids[i] == "subj" + std::to_string(r));
        for (std::size_t t = 1; t < W; ++t) CHECK(w[t] == w[0] + double(t));
        CHECK(static_cast<std::size_t>(w[0]) % 1000 % S == 0);
      }
    }
  }

  TEST_CASE("interpolation hand cases") {
    auto rec = testing::make_recording("s", 1, {1, 0, 3}, {0, 0, 0});
    rec.missing[1] = 1;
    CHECK(channel(interpolate_missing(rec), 0) == std::vector<double>{1, 2, 3});

    auto edge = testing::make_recording("s", 1, {0, 5, 6}, {0, 0, 0});
    edge.missing[0] = 1;
    const auto filled = interpolate_missing(edge);
    CHECK(channel(filled, 0) == std::vector<double>{5, 5, 6});
    CHECK_FALSE(filled.has_missing());

    auto clean = testing::make_recording("s", 2, {1, 2, 3, 4}, {0, 1});
    CHECK(interpolate_missing(clean).samples == clean.samples);

    auto empty = testing::make_recording("s", 1, {0, 0}, {0, 0});
    empty.missing = {1, 1};
    CHECK_THROWS_AS(interpolate_missing(empty), DataError);
  }

  TEST_CASE("interpolation matches the oracle on random masked signals") {
    Gen g(55);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t T = g.size(1, 60), C = g.size(1, 3);
      auto rec = testing::make_recording("s", C, g.reals(T * C, -10, 10), g.classes(T, 2));
      double t = g.real(0, 3);
      for (auto& ts : rec.timestamps) ts = (t += g.real(0.001, 0.5));
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t keep = g.size(0, T - 1);
        for (std::size_t i = 0; i < T; ++i)
          if (i != keep && g.coin(0.4)) rec.missing[i * C + c] = 1;
      }
      const auto out = interpolate_missing(rec);
      for (std::size_t c = 0; c < C; ++c) {
        std::vector<bool> m(T);
        for (std::size_t i = 0; i < T; ++i) m[i] = rec.is_missing(i, c);
        const auto want = testing::interpolation_oracle(rec.timestamps, channel(rec, c), m);
        const auto got = channel(out, c);
        for (std::size_t i = 0; i < T; ++i) {
          if (!m[i]) CHECK(got[i] == rec.value(i, c));  // present values bit-identical
          else CHECK(std::abs(got[i] - want[i]) <= 1e-12 * (1.0 + std::abs(want[i])));
        }
      }
    }
  }

  TEST_CASE("resampling reproduces linear signals") {
    Gen g(77);
    double worst = 0.0, worst_dt = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t T = g.size(2, 80);
      const double a = g.real(-5, 5), b = g.real(-5, 5);
      auto rec = testing::make_recording("s", 2, std::vector<double>(2 * T), g.classes(T, 3));
      double t = g.real(-2, 2);
      for (auto& ts : rec.timestamps) ts = (t += g.real(0.005, 0.2));
      for (std::size_t i = 0; i < T; ++i) {
        rec.value(i, 0) = a * rec.timestamps[i] + b;
        rec.value(i, 1) = 3.25;
      }
      const double rate = g.real(5, 120);
      const auto out = resample(rec, rate);
      const double t0 = rec.timestamps.front();
      CHECK(out.length() == static_cast<std::size_t>(std::floor((rec.timestamps.back() - t0) * rate + 1e-9)) + 1);
      for (std::size_t k = 0; k < out.length(); ++k) {
        worst = std::max(worst, std::abs(out.value(k, 0) - (a * out.timestamps[k] + b)));
        CHECK(out.value(k, 1) == doctest::Approx(3.25).epsilon(1e-15));
        if (k) worst_dt = std::max(worst_dt, std::abs(out.timestamps[k] - out.timestamps[k - 1] - 1.0 / rate));
      }
    }
    CHECK(worst <= 1e-9);
    CHECK(worst_dt < 1e-9);
  }

  TEST_CASE("resample grid and labels") {
    std::vector<double> v(41);
    auto rec = testing::make_recording("s", 1, v, std::vector<int>(41, 0), 20.0);
    CHECK(resample(rec, 25.0).length() == 51);

    // Labels take the nearest original sample, ties to the earlier one.
    auto lab = testing::make_recording("s", 1, {0, 0, 0}, {0, 1, 2}, 1.0);
    const auto out = resample(lab, 2.0);
    CHECK(out.labels == std::vector<int>{0, 0, 1, 1, 2});

    auto one = testing::make_recording("s", 1, {1}, {0});
    CHECK_THROWS_AS(resample(one, 10.0), DataError);
  }

  TEST_CASE("normalizer statistics") {
    auto rec = testing::make_recording("s", 1, {0, 2}, {0, 0});
    const std::vector<ingest::SensorRecording> one{rec};
    auto z = fit_normalizer(one, NormScheme::zscore);
    CHECK(z.center[0] == 1.0);
    CHECK(z.spread[0] == 1.0);

    auto mm = testing::make_recording("s", 1, {-1, 3, 0}, {0, 0, 0});
    const std::vector<ingest::SensorRecording> two{mm};
    auto m = fit_normalizer(two, NormScheme::minmax);
    CHECK(m.center[0] == -1.0);
    CHECK(m.spread[0] == 3.0);
    CHECK(channel(apply_normalizer(mm, m), 0) == std::vector<double>{0.0, 1.0, 0.25});

    auto flat = testing::make_recording("s", 1, {4, 4, 4}, {0, 0, 0});
    const std::vector<ingest::SensorRecording> three{flat};
    auto fz = fit_normalizer(three, NormScheme::zscore);
    CHECK(fz.spread[0] == 0.0);
    CHECK(channel(apply_normalizer(flat, fz), 0) == std::vector<double>{0, 0, 0});

    CHECK_THROWS_AS(fit_normalizer(std::span<const ingest::SensorRecording>{}, NormScheme::zscore), DataError);
    auto other = testing::make_recording("s", 2, {1, 2}, {0});
    CHECK_THROWS_AS(apply_normalizer(other, z), DataError);
  }

  TEST_CASE("zscore on the training data gives mean 0 and std 1; held-out data is not refit") {
    Gen g(3);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t T = g.size(2, 50), C = g.size(1, 4);
      std::vector<ingest::SensorRecording> train;
      for (int r = 0; r < 2; ++r) train.push_back(testing::make_recording("s", C, g.reals(T * C, -3, 9), g.classes(T, 2)));
      const auto stats = fit_normalizer(train, NormScheme::zscore);
      std::vector<double> sum(C, 0.0), sq(C, 0.0);
      for (const auto& r : train) {
        const auto n = apply_normalizer(r, stats);
        CHECK(n.labels == r.labels);
        CHECK(n.timestamps == r.timestamps);
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t c = 0; c < C; ++c) sum[c] += n.value(t, c), sq[c] += n.value(t, c) * n.value(t, c);
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double mean = sum[c] / double(2 * T);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(sq[c] / double(2 * T) - mean * mean) - 1.0) < 1e-9);
      }
      auto shifted = testing::make_recording("s", C, g.reals(T * C, 20, 30), g.classes(T, 2));
      const auto n = apply_normalizer(shifted, stats);
      CHECK(n.value(0, 0) == stats.apply(0, shifted.value(0, 0)));
      CHECK(n.value(0, 0) > 0.0);
    }
  }

  TEST_CASE("normalization is affine-consistent") {
    Gen g(19);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t T = g.size(2, 40);
      const double a = g.away_from_zero(1, 0.2, 5)[0], b = g.real(-10, 10);
      auto x = testing::make_recording("s", 1, g.reals(T, -3, 3), g.classes(T, 2));
      auto y = x;
      for (auto& v : y.samples) v = a * v + b;
      for (auto scheme : {NormScheme::zscore, NormScheme::minmax}) {
        const std::vector<ingest::SensorRecording> xs{x}, ys{y};
        const auto nx = apply_normalizer(x, fit_normalizer(xs, scheme));
        const auto ny = apply_normalizer(y, fit_normalizer(ys, scheme));
        for (std::size_t t = 0; t < T; ++t) {
          // z-scores flip sign with a; min-max maps to 1 - x when a < 0.
          double expect = nx.value(t, 0);
          if (a < 0) expect = scheme == NormScheme::zscore ? -expect : 1.0 - expect;
          CHECK(std::abs(ny.value(t, 0) - expect) < 1e-9);
        }
      }
    }
  }

  TEST_CASE("window normalizer counts every window sample") {
    const auto labels = ingest::LabelMap::first_n(2);
    const std::vector<ingest::SensorRecording> recs{testing::make_recording("s", 1, {0, 1, 2, 3}, {0, 0, 1, 1})};
    const auto ds = sliding_windows(recs, 2, 1, Labeling::majority, labels);
    const std::vector<std::size_t> idx{0, 1};
    const auto st = fit_normalizer(ds, idx, NormScheme::zscore);
    CHECK(st.center[0] == doctest::Approx(1.0));  // {0,1} and {1,2}
    const auto sub = ds.subset(std::vector<std::size_t>{2, 0});
    CHECK(sub.window(0)[0] == 2.0);
    CHECK(sub.labels[0] == ds.labels[2]);
    const auto norm_back = norm_stats_from_json(to_json(st));
    CHECK(norm_back.center == st.center);
    CHECK(norm_back.spread == st.spread);
  }
}
