#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "msgwtcn/data.hpp"
#include "msgwtcn/model.hpp"
#include "msgwtcn/optim.hpp"

namespace msgw {

struct TrainConfig {
  double learning_rate = 0.001;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-8;
  int batch_size = 64;
  int max_epochs = 100;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  double gradient_clip_norm = 0.0;  // <= 0: disabled
  // Compute tile; forward/backward run per microbatch with gradients
  // accumulated in index order. Part of the dropout stream, so changing it
  // changes trajectories the same way changing batch_size would.
  int microbatch_size = 16;
  // Off by default so rerun artifacts are byte-identical; the seconds column
  // is written as zero unless enabled.
  bool log_wall_time = false;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (batch_size < 1 || microbatch_size < 1) throw ConfigError("train batch sizes must be >= 1");
    if (max_epochs < 0) throw ConfigError("train.max_epochs must be >= 0");
    if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be >= 1");
  }
};

struct Metrics {
  double mae = 0.0;         // denormalized (paper units)
  double rmse_norm = 0.0;   // normalized scale
  double rmse_denorm = 0.0; // paper units
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_rmse_norm = 0.0;
  double val_rmse_denorm = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRow> rows;
  int best_epoch = 0;  // 0 means the initial model was never improved upon
  double best_val_mae = std::numeric_limits<double>::infinity();
  Metrics best_val_metrics;

  static constexpr const char* kCsvHeader = "epoch,train_loss,val_mae,val_rmse_norm,val_rmse_denorm,seconds";
};

namespace detail {

inline Tensor gather_inputs(const SampleSet& set, const std::vector<std::size_t>& order,
                            std::size_t lo, std::size_t hi) {
  const std::size_t per = set.history * set.nodes * set.channels;
  std::vector<double> data((hi - lo) * per);
  for (std::size_t k = lo; k < hi; ++k)
    std::copy(set.inputs.begin() + static_cast<long>(order[k] * per),
              set.inputs.begin() + static_cast<long>((order[k] + 1) * per),
              data.begin() + static_cast<long>((k - lo) * per));
  return Tensor::from_data({hi - lo, set.history, set.nodes, set.channels}, std::move(data));
}

inline Tensor gather_targets(const SampleSet& set, const std::vector<std::size_t>& order,
                             std::size_t lo, std::size_t hi) {
  const std::size_t per = set.horizon * set.nodes * set.channels;
  std::vector<double> data((hi - lo) * per);
  for (std::size_t k = lo; k < hi; ++k)
    std::copy(set.targets.begin() + static_cast<long>(order[k] * per),
              set.targets.begin() + static_cast<long>((order[k] + 1) * per),
              data.begin() + static_cast<long>((k - lo) * per));
  return Tensor::from_data({hi - lo, set.horizon, set.nodes, set.channels}, std::move(data));
}

inline void format_csv_row(std::ofstream& out, const EpochRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.epoch, r.train_loss,
                r.val_mae, r.val_rmse_norm, r.val_rmse_denorm, r.seconds);
  out << buf;
}

}  // namespace detail

// Forward the whole split in evaluation mode; MAE in denormalized units,
// RMSE on both scales.
inline Metrics evaluate(const Model& model, const SampleSet& set, const Normalizer& normalizer) {
  const std::size_t count = set.count();
  if (count == 0) throw EmptyDatasetError("evaluate: empty sample set");
  const std::size_t n = set.nodes;
  const std::size_t per = set.horizon * n * set.channels;

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double abs_sum = 0.0, sq_norm_sum = 0.0, sq_denorm_sum = 0.0;
  std::size_t total = 0;
  const std::size_t chunk = 64;
  for (std::size_t lo = 0; lo < count; lo += chunk) {
    const std::size_t hi = std::min(count, lo + chunk);
    Tensor x = detail::gather_inputs(set, order, lo, hi);
    Tensor pred = model.forward(nullptr, x, false, nullptr);
    for (std::size_t k = lo; k < hi; ++k) {
      const double* p = pred.value().data() + (k - lo) * per;
      const double* t_norm = set.targets.data() + k * per;
      const double* t_raw = set.targets_raw.data() + k * per;
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t node = (i / set.channels) % n;
        const double p_denorm = normalizer.invert_one(p[i], node);
        abs_sum += std::abs(p_denorm - t_raw[i]);
        sq_denorm_sum += (p_denorm - t_raw[i]) * (p_denorm - t_raw[i]);
        sq_norm_sum += (p[i] - t_norm[i]) * (p[i] - t_norm[i]);
        ++total;
      }
    }
  }
  Metrics m;
  m.mae = abs_sum / static_cast<double>(total);
  m.rmse_norm = std::sqrt(sq_norm_sum / static_cast<double>(total));
  m.rmse_denorm = std::sqrt(sq_denorm_sum / static_cast<double>(total));
  return m;
}

// Persistence baseline: every horizon step predicts the last observed frame.
inline double persistence_mae(const SampleSet& set) {
  if (set.count() == 0) throw EmptyDatasetError("persistence_mae: empty sample set");
  const std::size_t nc = set.nodes * set.channels;
  double acc = 0.0;
  std::size_t total = 0;
  for (std::size_t k = 0; k < set.count(); ++k)
    for (std::size_t h = 0; h < set.horizon; ++h)
      for (std::size_t i = 0; i < nc; ++i) {
        acc += std::abs(set.targets_raw[(k * set.horizon + h) * nc + i] -
                        set.inputs_last_raw[k * nc + i]);
        ++total;
      }
  return acc / static_cast<double>(total);
}

// Mini-batch RMSprop with early stopping on validation MAE; the best
// parameter set is restored into the model before returning. When
// `history_csv` is non-empty, rows stream to it as epochs finish.
inline TrainHistory train(Model& model, const Dataset& ds, const TrainConfig& cfg,
                          const std::string& history_csv = "") {
  cfg.validate();
  if (ds.train.count() == 0 || ds.val.count() == 0)
    throw EmptyDatasetError("train: empty train or validation split");

  Rng shuffle_rng = Rng(cfg.seed).fork("train/shuffle");
  Rng dropout_rng = Rng(cfg.seed).fork("train/dropout");
  Rmsprop opt(cfg.learning_rate, cfg.rmsprop_alpha, cfg.rmsprop_eps);
  auto params = model.parameters();

  std::ofstream csv;
  if (!history_csv.empty()) {
    csv.open(history_csv);
    if (!csv) throw IoError("cannot open history csv for writing: " + history_csv);
    csv << TrainHistory::kCsvHeader << '\n';
  }

  TrainHistory history;
  std::vector<std::vector<double>> best_params;
  auto snapshot = [&]() {
    best_params.clear();
    for (const auto& [name, t] : params) best_params.push_back(t.value());
  };
  auto restore = [&]() {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].second.value() = best_params[i];
  };

  if (cfg.max_epochs == 0) {
    history.best_val_metrics = evaluate(model, ds.val, ds.normalizer);
    history.best_val_mae = history.best_val_metrics.mae;
    history.best_epoch = 0;
    if (csv.is_open() && !csv.good()) throw IoError("history csv write failed");
    return history;
  }

  snapshot();  // the initial model is the fallback if nothing improves
  int since_best = 0;
  const std::size_t count = ds.train.count();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double epoch_sq_sum = 0.0;
    std::size_t epoch_elems = 0;
    for (std::size_t lo = 0; lo < count; lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(count, lo + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t batch_elems =
          (hi - lo) * ds.train.horizon * ds.train.nodes * ds.train.channels;

      for (std::size_t mlo = lo; mlo < hi; mlo += static_cast<std::size_t>(cfg.microbatch_size)) {
        const std::size_t mhi = std::min(hi, mlo + static_cast<std::size_t>(cfg.microbatch_size));
        Tensor x = detail::gather_inputs(ds.train, order, mlo, mhi);
        Tensor y = detail::gather_targets(ds.train, order, mlo, mhi);
        Tape tape;
        Tensor pred = model.forward(&tape, x, true, &dropout_rng);
        Tensor loss = mse_loss(&tape, pred, y);
        const std::size_t mb_elems = y.numel();
        // seed so that gradients of the full-batch mean accumulate across tiles
        backward(loss, tape, static_cast<double>(mb_elems) / static_cast<double>(batch_elems));
        epoch_sq_sum += loss.item() * static_cast<double>(mb_elems);
        epoch_elems += mb_elems;
      }
      opt.step(params, cfg.gradient_clip_norm);
      for (auto& [name, t] : params) t.zero_grad();
    }
    const double train_loss = epoch_sq_sum / static_cast<double>(epoch_elems);
    if (!std::isfinite(train_loss)) throw NonFiniteError("train: non-finite epoch loss");

    const Metrics val = evaluate(model, ds.val, ds.normalizer);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    EpochRow row{epoch, train_loss, val.mae, val.rmse_norm, val.rmse_denorm,
                 cfg.log_wall_time ? seconds : 0.0};
    history.rows.push_back(row);
    if (csv.is_open()) {
      detail::format_csv_row(csv, row);
      csv.flush();
    }

    if (val.mae < history.best_val_mae) {
      history.best_val_mae = val.mae;
      history.best_val_metrics = val;
      history.best_epoch = epoch;
      snapshot();
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.early_stop_patience) break;
    }
  }

  restore();
  if (csv.is_open() && !csv.good()) throw IoError("history csv write failed");
  return history;
}

}  // namespace msgw
