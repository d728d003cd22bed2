#include <catch2/catch_amalgamated.hpp>

#include "msgwtcn/analysis.hpp"
#include "msgwtcn/train.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace msgw;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.hidden_channels = 4;
  cfg.scales = {0.85};
  cfg.history = 8;
  cfg.dropout_p = 0.5;
  return cfg;
}

Dataset tiny_dataset(std::uint64_t seed = 7) {
  SynthParams p;
  p.width = 3;
  p.height = 3;
  p.steps = 600;
  SynthResult synth = synth_generate(p, seed);
  return make_dataset(synth.series, 8, 1);
}

Graph tiny_graph(std::uint64_t seed = 7) {
  SynthParams p;
  p.width = 3;
  p.height = 3;
  p.steps = 600;
  return synth_generate(p, seed).graph;
}

// All-constant samples at 0.5 with an identity [0,1] normalizer; exercises
// pure bias learning (the head bias can represent the constant map).
Dataset constant_dataset(std::size_t count, std::size_t p, std::size_t n) {
  Dataset ds;
  auto fill = [&](SampleSet& set, std::size_t c, const char* tag) {
    set.history = p;
    set.horizon = 1;
    set.nodes = n;
    set.channels = 1;
    set.split_tag = tag;
    set.inputs.assign(c * p * n, 0.5);
    set.targets.assign(c * n, 0.5);
    set.targets_raw.assign(c * n, 0.5);
    set.inputs_last_raw.assign(c * n, 0.5);
    set.target_times.assign(c, 0);
  };
  fill(ds.train, count, "train");
  fill(ds.val, count / 4 + 1, "val");
  fill(ds.test, count / 4 + 1, "test");
  ds.normalizer.per_node = true;
  ds.normalizer.min_v.assign(n, 0.0);
  ds.normalizer.max_v.assign(n, 1.0);
  return ds;
}

}  // namespace

TEST_CASE("rmsprop first-step hand values") {
  Tensor theta = Tensor::from_data({1}, {0.0}, true);
  theta.grad()[0] = 1.0;
  Rmsprop opt(0.001, 0.99, 1e-8);
  opt.step({{"theta", theta}});
  REQUIRE(opt.state()[0][0] == Catch::Approx(0.01).epsilon(1e-12));
  REQUIRE(theta.value()[0] == Catch::Approx(-0.001 / (0.1 + 1e-8)).epsilon(1e-12));
  REQUIRE(theta.value()[0] == Catch::Approx(-0.00999999).margin(1e-7));

  // second identical step moves less: v grows
  const double first = theta.value()[0];
  theta.grad()[0] = 1.0;
  opt.step({{"theta", theta}});
  const double second_step = theta.value()[0] - first;
  REQUIRE(std::abs(second_step) < std::abs(first));
}

TEST_CASE("rmsprop zero gradient leaves parameters, decays state") {
  Tensor theta = Tensor::from_data({2}, {1.0, -2.0}, true);
  theta.grad()[0] = 1.0;
  theta.grad()[1] = 2.0;
  Rmsprop opt(0.01, 0.9, 1e-8);
  opt.step({{"p", theta}});
  const auto v_after_first = opt.state()[0];
  const auto theta_after_first = theta.value();

  theta.zero_grad();
  opt.step({{"p", theta}});
  REQUIRE(theta.value() == theta_after_first);  // bit-identical
  REQUIRE(opt.state()[0][0] == Catch::Approx(0.9 * v_after_first[0]).epsilon(1e-15));
}

TEST_CASE("rmsprop with lr=0 is a bit-identical no-op on parameters") {
  Tensor theta = Tensor::from_data({3}, {0.1, -0.2, 0.3}, true);
  const auto before = theta.value();
  theta.grad()[0] = 0.5;
  theta.grad()[1] = -1.5;
  theta.grad()[2] = 2.5;
  Rmsprop opt(0.0, 0.99, 1e-8);
  opt.step({{"p", theta}});
  REQUIRE(theta.value() == before);
}

TEST_CASE("rmsprop rejects non-finite gradients naming the parameter") {
  Tensor theta = Tensor::from_data({1}, {0.0}, true);
  theta.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  Rmsprop opt;
  try {
    opt.step({{"layer0.gamma", theta}});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    REQUIRE(std::string(e.what()).find("layer0.gamma") != std::string::npos);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  Dataset ds = tiny_dataset();
  Graph g = tiny_graph();
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.batch_size = 32;
  tc.seed = 11;

  Model m1 = new_model(tiny_cfg(), g, 11);
  TrainHistory h1 = train(m1, ds, tc);
  Model m2 = new_model(tiny_cfg(), g, 11);
  TrainHistory h2 = train(m2, ds, tc);

  REQUIRE(h1.rows.size() == h2.rows.size());
  for (std::size_t i = 0; i < h1.rows.size(); ++i) {
    REQUIRE(h1.rows[i].train_loss == h2.rows[i].train_loss);  // bit-identical
    REQUIRE(h1.rows[i].val_mae == h2.rows[i].val_mae);
  }
  auto p1 = m1.parameters(), p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i].second.value() == p2[i].second.value());
}

TEST_CASE("gradient clip disabled vs huge threshold: identical trajectories") {
  Dataset ds = tiny_dataset();
  Graph g = tiny_graph();
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 32;
  tc.seed = 5;

  Model m1 = new_model(tiny_cfg(), g, 5);
  TrainConfig tc_clip = tc;
  tc_clip.gradient_clip_norm = 1e12;
  Model m2 = new_model(tiny_cfg(), g, 5);

  TrainHistory h1 = train(m1, ds, tc);
  TrainHistory h2 = train(m2, ds, tc_clip);
  for (std::size_t i = 0; i < h1.rows.size(); ++i)
    REQUIRE(h1.rows[i].train_loss == h2.rows[i].train_loss);
  auto p1 = m1.parameters(), p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i].second.value() == p2[i].second.value());
}

TEST_CASE("first-epoch loss is invariant to interleaved evaluation") {
  Dataset ds = tiny_dataset();
  Graph g = tiny_graph();
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.batch_size = 32;
  tc.seed = 21;

  Model m1 = new_model(tiny_cfg(), g, 21);
  TrainHistory h1 = train(m1, ds, tc);

  Model m2 = new_model(tiny_cfg(), g, 21);
  evaluate(m2, ds.val, ds.normalizer);  // extra eval consumes no training rng
  evaluate(m2, ds.test, ds.normalizer);
  TrainHistory h2 = train(m2, ds, tc);

  REQUIRE(h1.rows[0].train_loss == h2.rows[0].train_loss);
}

TEST_CASE("constant-signal dataset converges to near-zero loss") {
  Dataset ds = constant_dataset(128, 8, 4);
  Graph g = make_grid_graph(2, 2);
  ModelConfig cfg = tiny_cfg();
  cfg.dropout_p = 0.0;  // nothing stochastic to regularize here
  Model m = new_model(cfg, g, 31);
  TrainConfig tc;
  tc.max_epochs = 20;
  tc.batch_size = 16;
  tc.learning_rate = 0.01;
  tc.seed = 31;
  TrainHistory h = train(m, ds, tc);
  REQUIRE(h.rows.back().train_loss < 1e-6);
}

TEST_CASE("max_epochs=0 returns initial metrics without updates") {
  Dataset ds = tiny_dataset();
  Graph g = tiny_graph();
  Model m = new_model(tiny_cfg(), g, 2);
  const auto before = m.lift_weights.value();
  TrainConfig tc;
  tc.max_epochs = 0;
  TrainHistory h = train(m, ds, tc);
  REQUIRE(h.rows.empty());
  REQUIRE(h.best_epoch == 0);
  REQUIRE(std::isfinite(h.best_val_mae));
  REQUIRE(m.lift_weights.value() == before);
}

TEST_CASE("best checkpoint reproduces the logged best validation MAE exactly") {
  Dataset ds = tiny_dataset();
  Graph g = tiny_graph();
  Model m = new_model(tiny_cfg(), g, 13);
  TrainConfig tc;
  tc.max_epochs = 4;
  tc.batch_size = 32;
  tc.seed = 13;
  TrainHistory h = train(m, ds, tc);
  const Metrics re = evaluate(m, ds.val, ds.normalizer);
  REQUIRE(re.mae == h.best_val_mae);  // bit-identical
}

TEST_CASE("evaluate metrics: identity predictions and jensen inequality") {
  Dataset ds = tiny_dataset();
  Graph g = tiny_graph();
  Model m = new_model(tiny_cfg(), g, 17);
  for (const auto& set : {ds.train, ds.val, ds.test}) {
    Metrics mt = evaluate(m, set, ds.normalizer);
    REQUIRE(mt.mae <= mt.rmse_denorm + 1e-12);
    REQUIRE(mt.mae >= 0.0);
  }

  SampleSet empty;
  REQUIRE_THROWS_AS(evaluate(m, empty, ds.normalizer), EmptyDatasetError);
  REQUIRE_THROWS_AS(persistence_mae(empty), EmptyDatasetError);
}

TEST_CASE("history csv schema and determinism-friendly seconds column") {
  Dataset ds = tiny_dataset();
  Graph g = tiny_graph();
  Model m = new_model(tiny_cfg(), g, 3);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 32;
  tc.seed = 3;
  const std::string path = "tmp_history.csv";
  TrainHistory h = train(m, ds, tc, path);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == TrainHistory::kCsvHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    REQUIRE(line.substr(line.rfind(',') + 1) == "0.000");  // wall time suppressed
  }
  REQUIRE(rows == h.rows.size());
  std::remove(path.c_str());
}

TEST_CASE("persistence baseline on a drifting series") {
  SpeedSeries s;
  s.node_ids = {"a"};
  s.dt = 300;
  const std::size_t rows = 40;
  s.timestamps.resize(rows);
  s.values.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    s.timestamps[i] = static_cast<long long>(i) * 300;
    s.values[i] = static_cast<double>(i);  // rises by exactly 1 per step
  }
  s.segments = {{0, rows}};
  SampleSet set = window(s, 4, 1);
  REQUIRE(persistence_mae(set) == Catch::Approx(1.0));
}
