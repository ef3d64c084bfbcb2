#include <doctest.h>

#include <map>

#include "dlarc/csv.hpp"
#include "support.hpp"

using namespace dlarc;
using namespace dlarc::ingest;
using dlarc::testing::Gen;

TEST_SUITE("ingest") {
  TEST_CASE("label map") {
    const auto rw = LabelMap::rwhar();
    CHECK(rw.size() == 8);
    CHECK(rw.id(rw.name(5)) == 5);
    CHECK_THROWS_AS(rw.id("flying"), DataError);
    CHECK_THROWS_AS(LabelMap({"a"}), DataError);
    CHECK_THROWS_AS(LabelMap({"a", "a"}), DataError);
    CHECK(LabelMap::first_n(10).name(9) == "class_9");
    CHECK(LabelMap::first_n(3).names() == std::vector<std::string>(rw.names().begin(), rw.names().begin() + 3));
  }

  TEST_CASE("load a well-formed file with a gap") {
    const auto dir = testing::scratch_dir("ingest_load");
    const LabelMap labels({"walk", "sit"});
    testing::write_file(dir / "s1.csv",
                        "subject_id,timestamp,acc_x,acc_y,label\n"
                        "s1,0.0,1.5,2,walk\n"
                        "s1,0.02,1.6,,walk\n"
                        "s1,0.04,1.7,2.2,sit\n");
    const auto rec = load_recording(dir / "s1.csv", labels);
    CHECK(rec.length() == 3);
    CHECK(rec.channels == std::vector<std::string>{"acc_x", "acc_y"});
    CHECK(rec.is_missing(1, 1));
    CHECK_FALSE(rec.is_missing(1, 0));
    CHECK(rec.value(2, 1) == 2.2);
    CHECK(rec.labels == std::vector<ClassId>{0, 0, 1});
  }

  TEST_CASE("loader errors name the row") {
    const auto dir = testing::scratch_dir("ingest_errors");
    const LabelMap labels({"walk", "sit"});
    auto expect = [&](const std::string& text, const std::string& fragment) {
      testing::write_file(dir / "x.csv", text);
      try {
        load_recording(dir / "x.csv", labels);
        FAIL("expected DataError for: " << fragment);
      } catch (const DataError& e) {
        INFO(e.what());
        CHECK(std::string(e.what()).find(fragment) != std::string::npos);
      }
    };
    expect("subject_id,timestamp,a,label\ns,0.0,1,walk\ns,0.02,1,walk\ns,0.01,1,walk\n", "non-monotonic at row 3");
    expect("subject_id,a,label\ns,1,walk\n", "timestamp");
    expect("subject_id,timestamp,a,label\ns,0,1,run\n", "'run' not in label map");
    expect("", "empty file");
    expect("subject_id,timestamp,a,label\n", "empty file");
    CHECK_THROWS_WITH_AS(load_directory(testing::scratch_dir("ingest_empty"), labels),
                         doctest::Contains("no recordings found"), DataError);
  }

  TEST_CASE("write then load round-trips") {
    const auto dir = testing::scratch_dir("ingest_roundtrip");
    Gen g(12);
    const LabelMap labels = LabelMap::rwhar();
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t T = g.size(1, 40), C = g.size(1, 4);
      auto rec = testing::make_recording("subj", C, g.reals(T * C, -20, 20), g.classes(T, 8), 50.0);
      double t = g.real(-5, 5);
      for (auto& ts : rec.timestamps) ts = (t += g.real(1e-3, 0.1));
      for (std::size_t i = 0; i < T * C; ++i)
        if (g.coin(0.1)) rec.missing[i] = 1, rec.samples[i] = 0.0;
      write_recording(dir / "r.csv", rec, labels);
      const auto back = load_recording(dir / "r.csv", labels);
      CHECK(back.subject_id == rec.subject_id);
      CHECK(back.timestamps == rec.timestamps);
      CHECK(back.labels == rec.labels);
      CHECK(back.missing == rec.missing);
      for (std::size_t i = 0; i < T * C; ++i)
        if (!rec.missing[i]) CHECK(back.samples[i] == rec.samples[i]);
    }
  }

  TEST_CASE("synthetic generator") {
    SyntheticSpec s;
    s.classes = 2;
    s.rate = 50;
    s.bout_seconds = 2;
    s.bouts_per_class = 3;
    const auto a = generate_synthetic(s, 7);
    REQUIRE(a.size() == s.subjects);
    for (const auto& r : a) {
      CHECK(r.length() == 600);
      CHECK_NOTHROW(r.validate(2));
    }
    const auto b = generate_synthetic(s, 7);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].samples == b[i].samples);
      CHECK(a[i].labels == b[i].labels);
      CHECK(a[i].timestamps == b[i].timestamps);
    }
    CHECK(generate_synthetic(s, 8)[0].samples != a[0].samples);

    SyntheticSpec eight;
    eight.classes = 8;
    const auto summary = summarize(generate_synthetic(eight, 1), LabelMap::rwhar());
    CHECK(summary.class_names.size() == 8);
    for (auto n : summary.class_counts) CHECK(n > 0);
  }

  TEST_CASE("summary of hand-made bouts") {
    const LabelMap labels({"A", "B"});
    auto rec = testing::make_recording("s", 1, {1, 2, 3, 4, 5, 6}, {0, 0, 1, 1, 1, 0}, 1.0);
    const auto s = summarize({rec}, labels);
    CHECK(s.class_counts == std::vector<std::size_t>{3, 3});
    CHECK(s.bout_counts == std::vector<std::size_t>{2, 1});
    CHECK(s.mean_bout_seconds[0] == doctest::Approx(1.5));
    CHECK(s.mean_bout_seconds[1] == doctest::Approx(3.0));
    CHECK(s.sampling_rate == doctest::Approx(1.0));
    CHECK(s.channels[0].min == 1);
    CHECK(s.channels[0].max == 6);
    CHECK(s.channels[0].mean == doctest::Approx(3.5));

    auto single = testing::make_recording("s", 1, {1, 1, 1}, {1, 1, 1});
    CHECK(summarize({single}, labels).class_counts == std::vector<std::size_t>{0, 3});

    auto other = testing::make_recording("t", 2, {1, 1, 1, 1}, {0, 0});
    CHECK_THROWS_AS(summarize({rec, other}, labels), DataError);
  }

  TEST_CASE("summary bouts agree with run-length encoding") {
    Gen g(31);
    const LabelMap labels = LabelMap::first_n(4);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<SensorRecording> recs;
      std::size_t total = 0;
      std::vector<std::size_t> bouts(4, 0);
      for (std::size_t r = 0, n = g.size(1, 4); r < n; ++r) {
        const std::size_t T = g.size(2, 30);
        std::vector<int> lab;
        while (lab.size() < T) {
          const int c = g.integer(0, 3);
          for (std::size_t run = g.size(1, 5); run > 0 && lab.size() < T; --run) lab.push_back(c);
        }
        for (std::size_t t = 0; t < T; ++t)
          if (t == 0 || lab[t] != lab[t - 1]) ++bouts[lab[t]];
        total += T;
        recs.push_back(testing::make_recording("s" + std::to_string(r), 1, g.reals(T, 0, 1), lab, 10.0));
      }
      const auto s = summarize(recs, labels);
      CHECK(s.bout_counts == bouts);
      std::size_t sum = 0;
      for (auto c : s.class_counts) sum += c;
      CHECK(sum == total);
      CHECK(s.total_samples == total);
    }
  }

  TEST_CASE("rate estimate uses the median gap") {
    CHECK(estimate_rate(std::vector<double>{0, 0.02, 0.04, 0.5, 0.52}) == doctest::Approx(50.0));
    CHECK(estimate_rate(std::vector<double>{1.0}) == 0.0);
  }

  TEST_CASE("shortest round-trip formatting") {
    Gen g(2);
    for (int i = 0; i < 1000; ++i) {
      const double x = g.normal(1e3) * std::pow(10.0, g.integer(-30, 30));
      CHECK(csv::parse_double(csv::format_double(x), "x") == x);
    }
    CHECK_THROWS_AS(csv::parse_double("1.5x", "field"), DataError);
  }
}
