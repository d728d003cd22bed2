#include <catch2/catch_amalgamated.hpp>

#include "msgwtcn/analysis.hpp"
#include "msgwtcn/data.hpp"

#include <cstdio>
#include <fstream>

using namespace msgw;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

struct TmpFile {
  std::string path;
  explicit TmpFile(std::string p, const std::string& content) : path(std::move(p)) {
    write_file(path, content);
  }
  ~TmpFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("iso8601 parsing and formatting round trip") {
  const long long t = parse_iso8601("2021-01-01T00:00:00");
  REQUIRE(format_iso8601(t) == "2021-01-01T00:00:00");
  REQUIRE(parse_iso8601("2021-01-01 00:05:00") - t == 300);
  REQUIRE(format_iso8601(parse_iso8601("1999-12-31T23:59:59")) == "1999-12-31T23:59:59");
  REQUIRE_THROWS_AS(parse_iso8601("not-a-time"), MalformedCsvError);
}

TEST_CASE("clean speed csv loads") {
  TmpFile f("tmp_speeds1.csv",
            "timestamp,s1,s2\n"
            "2021-01-01T00:00:00,50,60\n"
            "2021-01-01T00:05:00,51,61\n"
            "2021-01-01T00:10:00,52,62\n");
  SpeedSeries s = load_speed_csv(f.path);
  REQUIRE(s.rows() == 3);
  REQUIRE(s.n() == 2);
  REQUIRE(s.dt == 300);
  REQUIRE(s.segments == std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}});
  REQUIRE(s.at(1, 0) == 51.0);
  REQUIRE(s.at(2, 1) == 62.0);
}

TEST_CASE("single missing cell is interpolated at the midpoint") {
  TmpFile f("tmp_speeds2.csv",
            "timestamp,s1,s2\n"
            "2021-01-01T00:00:00,50,60\n"
            "2021-01-01T00:05:00,,61\n"
            "2021-01-01T00:10:00,54,62\n");
  SpeedSeries s = load_speed_csv(f.path);
  REQUIRE(s.at(1, 0) == Catch::Approx(52.0));
  REQUIRE(s.segments.size() == 1);
}

TEST_CASE("long gaps split the series into segments") {
  // five missing rows (> 3) between two runs
  std::string csv = "timestamp,s1\n";
  for (int i = 0; i < 10; ++i)
    csv += format_iso8601(parse_iso8601("2021-01-01T00:00:00") + i * 300) + "," +
           std::to_string(50 + i) + "\n";
  for (int i = 15; i < 25; ++i)
    csv += format_iso8601(parse_iso8601("2021-01-01T00:00:00") + i * 300) + "," +
           std::to_string(50 + i) + "\n";
  TmpFile f("tmp_speeds3.csv", csv);
  SpeedSeries s = load_speed_csv(f.path);
  REQUIRE(s.rows() == 25);
  REQUIRE(s.segments == std::vector<std::pair<std::size_t, std::size_t>>{{0, 10}, {15, 25}});

  // windows never cross the break
  SampleSet set = window(s, 4, 1);
  REQUIRE(set.count() == (10 - 4 - 1 + 1) * 2);

  // a 3-row gap is bridged by interpolation instead
  std::string csv2 = "timestamp,s1\n";
  for (int i = 0; i < 4; ++i)
    csv2 += format_iso8601(parse_iso8601("2021-01-01T00:00:00") + i * 300) + ",50\n";
  for (int i = 7; i < 10; ++i)
    csv2 += format_iso8601(parse_iso8601("2021-01-01T00:00:00") + i * 300) + ",58\n";
  TmpFile f2("tmp_speeds3b.csv", csv2);
  SpeedSeries s2 = load_speed_csv(f2.path);
  REQUIRE(s2.segments == std::vector<std::pair<std::size_t, std::size_t>>{{0, 10}});
  REQUIRE(s2.at(5, 0) == Catch::Approx(54.0));
}

TEST_CASE("speed csv rejects malformed input") {
  TmpFile bad_header("tmp_bad1.csv", "time,s1\n2021-01-01T00:00:00,50\n");
  REQUIRE_THROWS_AS(load_speed_csv(bad_header.path), MalformedCsvError);

  TmpFile negative("tmp_bad2.csv", "timestamp,s1\n2021-01-01T00:00:00,-3\n");
  REQUIRE_THROWS_AS(load_speed_csv(negative.path), MalformedCsvError);

  TmpFile not_numeric("tmp_bad3.csv", "timestamp,s1\n2021-01-01T00:00:00,fast\n");
  REQUIRE_THROWS_AS(load_speed_csv(not_numeric.path), MalformedCsvError);

  TmpFile dup("tmp_bad4.csv",
              "timestamp,s1\n2021-01-01T00:00:00,5\n2021-01-01T00:00:00,6\n");
  REQUIRE_THROWS_AS(load_speed_csv(dup.path), MalformedCsvError);

  TmpFile uneven("tmp_bad5.csv",
                 "timestamp,s1\n2021-01-01T00:00:00,5\n2021-01-01T00:05:00,6\n"
                 "2021-01-01T00:12:30,7\n");
  REQUIRE_THROWS_AS(load_speed_csv(uneven.path), NonUniformSpacingError);

  REQUIRE_THROWS_AS(load_speed_csv("no_such.csv"), IoError);

  // column/graph mismatch
  TmpFile ok("tmp_bad6.csv", "timestamp,s1,s2\n2021-01-01T00:00:00,5,6\n");
  Graph g = build_graph({{"a", "b"}});
  REQUIRE_THROWS_AS(load_speed_csv(ok.path, &g), UnknownNodeError);
}

TEST_CASE("normalizer affine map, clipping, and inversion") {
  SpeedSeries s;
  s.node_ids = {"s1"};
  s.timestamps = {0, 300, 600};
  s.dt = 300;
  s.values = {10, 20, 30};
  s.segments = {{0, 3}};

  Normalizer nm = fit_normalizer(s, 0, 3);
  REQUIRE(nm.apply_one(10, 0) == 0.0);
  REQUIRE(nm.apply_one(20, 0) == 0.5);
  REQUIRE(nm.apply_one(30, 0) == 1.0);
  REQUIRE(nm.apply_one(35, 0) == Catch::Approx(1.25));   // out of range, unclipped region
  REQUIRE(nm.apply_one(1000, 0) == 1.5);                 // clipped
  REQUIRE(nm.apply_one(-1000, 0) == -0.5);

  for (double v : {10.0, 17.3, 29.999})
    REQUIRE(nm.invert_one(nm.apply_one(v, 0), 0) == Catch::Approx(v).margin(1e-12));

  SpeedSeries constant = s;
  constant.values = {7, 7, 7};
  REQUIRE_THROWS_AS(fit_normalizer(constant, 0, 3), ConstantNodeError);
}

TEST_CASE("window counts follow the per-segment formula") {
  SpeedSeries s;
  s.node_ids = {"s1"};
  s.dt = 300;
  auto fill = [&](std::vector<std::pair<std::size_t, std::size_t>> segments, std::size_t rows) {
    s.timestamps.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) s.timestamps[i] = static_cast<long long>(i) * 300;
    s.values.assign(rows, 1.0);
    for (std::size_t i = 0; i < rows; ++i) s.values[i] = static_cast<double>(i);
    s.segments = std::move(segments);
  };

  fill({{0, 100}}, 100);
  REQUIRE(window(s, 12, 1).count() == 88);

  fill({{0, 13}}, 13);
  REQUIRE(window(s, 12, 1).count() == 1);

  // per the count formula each 50-row segment yields 50-12-1+1 = 38 windows
  fill({{0, 50}, {50, 100}}, 100);
  REQUIRE(window(s, 12, 1).count() == 76);

  fill({{0, 12}}, 12);
  REQUIRE_THROWS_AS(window(s, 12, 1), TooShortError);
}

TEST_CASE("windowing reconstructs the series") {
  SpeedSeries s;
  s.node_ids = {"s1", "s2"};
  s.dt = 300;
  const std::size_t rows = 30;
  s.timestamps.resize(rows);
  s.values.resize(rows * 2);
  for (std::size_t i = 0; i < rows; ++i) {
    s.timestamps[i] = static_cast<long long>(i) * 300;
    s.values[i * 2] = static_cast<double>(i);
    s.values[i * 2 + 1] = 100.0 + static_cast<double>(i);
  }
  s.segments = {{0, rows}};

  const std::size_t p = 5, t = 1;
  SampleSet set = window(s, p, t);
  REQUIRE(set.count() == rows - p - t + 1);
  // first row of consecutive windows walks the series; remaining rows of the
  // last window finish it
  for (std::size_t k = 0; k < set.count(); ++k)
    for (std::size_t i = 0; i < 2; ++i)
      REQUIRE(set.inputs[(k * p) * 2 + i] == s.values[k * 2 + i]);
  const std::size_t last = set.count() - 1;
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t i = 0; i < 2; ++i)
      REQUIRE(set.inputs[(last * p + r) * 2 + i] == s.values[(last + r) * 2 + i]);
}

TEST_CASE("chronological split sizes and rejection") {
  SpeedSeries s;
  s.node_ids = {"s1"};
  s.dt = 300;
  auto make = [&](std::size_t rows) {
    s.timestamps.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) s.timestamps[i] = static_cast<long long>(i) * 300;
    s.values.assign(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) s.values[i] = static_cast<double>(i % 97);
    s.segments = {{0, rows}};
  };

  make(100 + 12);  // 100 windows at P=12,T=1
  SampleSet all = window(s, 12, 1);
  REQUIRE(all.count() == 100);
  SplitResult sr = chronological_split(all, {0.7, 0.1, 0.2});
  REQUIRE(sr.train.count() == 70);
  REQUIRE(sr.val.count() == 10);
  REQUIRE(sr.test.count() == 20);

  make(99 + 12);
  SampleSet all99 = window(s, 12, 1);
  SplitResult sr99 = chronological_split(all99, {0.7, 0.1, 0.2});
  REQUIRE(sr99.train.count() == 69);
  REQUIRE(sr99.val.count() == 9);
  REQUIRE(sr99.test.count() == 21);

  REQUIRE_THROWS_AS(chronological_split(all, {0.0, 1.0, 0.0}), ConfigError);
  REQUIRE_THROWS_AS(chronological_split(all, {0.5, 0.2, 0.2}), ConfigError);

  // no val/test target inside the train time range
  REQUIRE(sr.val.target_times.front() > sr.train.target_times.back());
  REQUIRE(sr.test.target_times.front() > sr.val.target_times.back());
}

TEST_CASE("make_dataset normalizes training data into [0,1]") {
  SynthResult synth = synth_generate(SynthParams{}, 7);
  Dataset ds = make_dataset(synth.series, 12, 1);
  double lo = 1e300, hi = -1e300;
  for (double v : ds.train.inputs) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  REQUIRE(lo >= 0.0);
  REQUIRE(hi <= 1.0);
  REQUIRE(ds.train.count() > ds.test.count());
}

TEST_CASE("synthetic generator determinism and dynamics") {
  SynthParams p;
  p.width = 3;
  p.height = 3;
  p.steps = 600;

  SynthResult a = synth_generate(p, 42);
  SynthResult b = synth_generate(p, 42);
  REQUIRE(a.series.values == b.series.values);  // bit-identical
  SynthResult c = synth_generate(p, 43);
  REQUIRE(a.series.values != c.series.values);

  // no injections, no sinusoid: speeds sit at v_free from the start
  SynthParams quiet = p;
  quiet.p_inject = 0.0;
  quiet.sin_amplitude = 0.0;
  SynthResult q = synth_generate(quiet, 42);
  for (std::size_t i = 0; i < q.series.n(); ++i)
    for (std::size_t r : {std::size_t{0}, std::size_t{100}, std::size_t{599}})
      REQUIRE(q.series.at(r, i) == q.series.at(0, i));

  // alpha = 0 decouples the nodes
  DenseMatrix op0 = synth_diffusion_operator(a.graph, 0.0, 0.05);
  for (std::size_t i = 0; i < op0.rows(); ++i)
    for (std::size_t j = 0; j < op0.cols(); ++j)
      if (i != j) REQUIRE(op0(i, j) == 0.0);

  // alpha > 0 reaches direct neighbours within two steps
  DenseMatrix op = synth_diffusion_operator(a.graph, 0.3, 0.05);
  DenseMatrix op2 = matmul(op, op);
  DenseMatrix adj = adjacency_matrix(a.graph);
  for (std::size_t i = 0; i < adj.rows(); ++i)
    for (std::size_t j = 0; j < adj.cols(); ++j)
      if (adj(i, j) == 1.0) {
        REQUIRE(op(i, j) > 0.0);
        REQUIRE(op2(i, j) > 0.0);
      }

  // spectral radius below one for the defaults on every topology
  for (const char* topo : {"grid", "two_community", "hybrid_highway_grid"}) {
    SynthParams sp;
    sp.topology = topo;
    sp.steps = 500;
    REQUIRE_NOTHROW(synth_generate(sp, 1));
  }

  // unstable parameters rejected with the spectral-radius diagnostic
  SynthParams unstable = p;
  unstable.alpha = 1.3;
  unstable.beta = 0.0;
  try {
    synth_generate(unstable, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("spectral radius") != std::string::npos);
  }

  REQUIRE_THROWS_AS([&] { SynthParams s2; s2.steps = 100; synth_generate(s2, 1); }(), ConfigError);
}

TEST_CASE("speed csv round trip preserves values bit-exactly") {
  SynthParams p;
  p.width = 3;
  p.height = 2;
  p.steps = 500;
  SynthResult synth = synth_generate(p, 9);
  write_speed_csv(synth.series, "tmp_rt.csv");
  SpeedSeries back = load_speed_csv("tmp_rt.csv", &synth.graph);
  REQUIRE(back.values == synth.series.values);
  REQUIRE(back.timestamps == synth.series.timestamps);
  std::remove("tmp_rt.csv");
}

TEST_CASE("slice_series keeps the requested columns") {
  SynthParams p;
  p.width = 3;
  p.height = 2;
  p.steps = 500;
  SynthResult synth = synth_generate(p, 9);
  std::vector<std::string> keep = {synth.graph.node_ids[0], synth.graph.node_ids[3]};
  SpeedSeries sliced = slice_series(synth.series, keep);
  REQUIRE(sliced.n() == 2);
  for (std::size_t r : {std::size_t{0}, std::size_t{250}}) {
    REQUIRE(sliced.at(r, 0) == synth.series.at(r, 0));
    REQUIRE(sliced.at(r, 1) == synth.series.at(r, 3));
  }
  REQUIRE_THROWS_AS(slice_series(synth.series, {"nope"}), UnknownNodeError);
}
