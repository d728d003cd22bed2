#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "msgwtcn/data.hpp"
#include "msgwtcn/model.hpp"
#include "msgwtcn/train.hpp"

namespace msgw {

inline double mae(const std::vector<double>& pred, const std::vector<double>& obs) {
  if (pred.size() != obs.size()) throw ShapeError("mae: length mismatch");
  if (pred.empty()) throw EmptyInputError("mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(obs[i] - pred[i]);
  return acc / static_cast<double>(pred.size());
}

inline double rmse(const std::vector<double>& pred, const std::vector<double>& obs) {
  if (pred.size() != obs.size()) throw ShapeError("rmse: length mismatch");
  if (pred.empty()) throw EmptyInputError("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (obs[i] - pred[i]) * (obs[i] - pred[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw EmptyInputError("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double frobenius_sq(const DenseMatrix& w) {
  if (!w.square()) throw ShapeError("frobenius_sq: matrix not square");
  double acc = 0.0;
  for (double v : w.data()) acc += v * v;
  return acc;
}

inline DenseMatrix zero_diagonal(const DenseMatrix& w) {
  if (!w.square()) throw ShapeError("zero_diagonal: matrix not square");
  DenseMatrix out = w;
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Learned-weight analysis

// Psi_s diag(Gamma_s^i) Psi_s^-1 for layer i and scale s.
struct WaveletWeightMatrix {
  int layer = 0;   // 1-based, matching the stacked-layer indexing
  double scale = 0.0;
  DenseMatrix w;
};

inline std::vector<WaveletWeightMatrix> extract_weight_matrices(const Model& model) {
  std::vector<WaveletWeightMatrix> out;
  const std::size_t n = static_cast<std::size_t>(model.graph.n);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t s = 0; s < model.bases.size(); ++s) {
      const auto& basis = *model.bases[s];
      const auto& gamma = model.layers[l].spatial.gammas[s].value();
      DenseMatrix scaled = basis.psi;  // Psi * diag(gamma)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) scaled(i, k) *= gamma[k];
      out.push_back({static_cast<int>(l) + 1, basis.scale, matmul(scaled, basis.psi_inv)});
    }
  }
  return out;
}

struct DiagonalContributionRow {
  int layer = 0;
  double scale = 0.0;
  double norm_before = 0.0;
  double norm_after = 0.0;
  double rel_drop = 0.0;  // (before - after) / before
};

inline std::vector<DiagonalContributionRow> diagonal_contribution_report(const Model& model) {
  std::vector<DiagonalContributionRow> rows;
  for (const auto& wm : extract_weight_matrices(model)) {
    DiagonalContributionRow r;
    r.layer = wm.layer;
    r.scale = wm.scale;
    r.norm_before = frobenius_sq(wm.w);
    r.norm_after = frobenius_sq(zero_diagonal(wm.w));
    r.rel_drop = r.norm_before > 0.0 ? (r.norm_before - r.norm_after) / r.norm_before : 0.0;
    rows.push_back(r);
  }
  return rows;
}

// Aggregate relative drop per scale (layer norms summed before the ratio).
inline double scale_diagonal_drop(const std::vector<DiagonalContributionRow>& rows, double scale) {
  double before = 0.0, after = 0.0;
  for (const auto& r : rows)
    if (r.scale == scale) {
      before += r.norm_before;
      after += r.norm_after;
    }
  if (before == 0.0) throw EmptyInputError("scale_diagonal_drop: no rows at the requested scale");
  return (before - after) / before;
}

struct LinkScore {
  std::string node_id;
  double scale = 0.0;
  double score = 0.0;  // squared row norm summed across layers
  int rank = 0;        // 1 = most influential, per scale
  bool top = false;
};

// Row-wise squared norms summed across layers, ranked per scale; ties keep
// node-id order. ceil(N * percentile / 100) rows are flagged.
inline std::vector<LinkScore> link_importance(const Model& model, double percentile) {
  if (!(percentile > 0.0 && percentile < 100.0))
    throw ConfigError("link_importance: percentile must be in (0,100)");
  const std::size_t n = static_cast<std::size_t>(model.graph.n);
  const auto mats = extract_weight_matrices(model);
  std::vector<LinkScore> out;
  for (std::size_t s = 0; s < model.bases.size(); ++s) {
    const double scale = model.bases[s]->scale;
    std::vector<double> score(n, 0.0);
    for (const auto& wm : mats) {
      if (wm.scale != scale) continue;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) score[i] += wm.w(i, j) * wm.w(i, j);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    const std::size_t flagged =
        static_cast<std::size_t>(std::ceil(static_cast<double>(n) * percentile / 100.0));
    std::vector<LinkScore> per_scale(n);
    for (std::size_t r = 0; r < n; ++r) {
      LinkScore& ls = per_scale[order[r]];
      ls.node_id = model.graph.node_ids[order[r]];
      ls.scale = scale;
      ls.score = score[order[r]];
      ls.rank = static_cast<int>(r) + 1;
      ls.top = r < flagged;
    }
    out.insert(out.end(), per_scale.begin(), per_scale.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment harnesses

struct ScaleScanRow {
  double scale = 0.0;
  double median_val_mae = 0.0;
};

// Single-scale model per grid point, trained per seed; median validation MAE.
inline std::vector<ScaleScanRow> scale_scan(const Graph& graph, const Dataset& ds,
                                            const std::vector<double>& scale_grid,
                                            const ModelConfig& base_cfg, const TrainConfig& tc,
                                            const std::vector<std::uint64_t>& seeds) {
  if (scale_grid.empty()) throw ConfigError("scale_scan: empty grid");
  if (seeds.empty()) throw ConfigError("scale_scan: need at least one seed");
  std::vector<ScaleScanRow> rows;
  for (double s : scale_grid) {
    ModelConfig cfg = base_cfg;
    cfg.scales = {s};
    std::vector<double> maes;
    for (std::uint64_t seed : seeds) {
      Model model = new_model(cfg, graph, seed);
      TrainConfig tc_run = tc;
      tc_run.seed = seed;
      TrainHistory h = train(model, ds, tc_run);
      maes.push_back(h.best_val_mae);
    }
    rows.push_back({s, median(maes)});
  }
  return rows;
}

// Restrict a series to the columns of an induced subgraph.
inline SpeedSeries slice_series(const SpeedSeries& s, const std::vector<std::string>& keep_ids) {
  std::vector<std::string> sorted = keep_ids;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> cols;
  for (const auto& id : sorted) {
    const auto it = std::lower_bound(s.node_ids.begin(), s.node_ids.end(), id);
    if (it == s.node_ids.end() || *it != id)
      throw UnknownNodeError("slice_series: unknown node id '" + id + "'");
    cols.push_back(static_cast<std::size_t>(it - s.node_ids.begin()));
  }
  SpeedSeries out;
  out.timestamps = s.timestamps;
  out.dt = s.dt;
  out.node_ids = sorted;
  out.segments = s.segments;
  out.channels = s.channels;
  out.values.resize(s.rows() * cols.size());
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out.values[r * cols.size() + c] = s.at(r, cols[c]);
  return out;
}

struct AblationCell {
  std::string subset_name;
  std::vector<double> scales;
  double median_test_mae = 0.0;
};

struct NodeSubset {
  std::string name;
  std::vector<std::string> node_ids;
};

// Retrain per (subset, scale set) with shared seeds; entries are median test
// MAE. Row-major over scale sets.
inline std::vector<AblationCell> ablation_run(const Graph& graph, const SpeedSeries& series,
                                              const std::vector<NodeSubset>& subsets,
                                              const std::vector<std::vector<double>>& scale_sets,
                                              const ModelConfig& base_cfg, const TrainConfig& tc,
                                              const std::vector<std::uint64_t>& seeds,
                                              const std::vector<double>& fractions = {0.7, 0.1, 0.2}) {
  if (subsets.empty() || scale_sets.empty()) throw ConfigError("ablation_run: empty subsets or scale sets");
  if (seeds.empty()) throw ConfigError("ablation_run: need at least one seed");

  struct Prepared {
    Graph graph;
    Dataset ds;
  };
  std::vector<Prepared> prepared;
  for (const auto& subset : subsets) {
    Graph sub = subgraph(graph, subset.node_ids).graph;
    SpeedSeries sliced = slice_series(series, sub.node_ids);
    prepared.push_back({std::move(sub),
                        make_dataset(sliced, static_cast<std::size_t>(base_cfg.history),
                                     static_cast<std::size_t>(base_cfg.horizon), fractions)});
  }

  std::vector<AblationCell> cells;
  for (const auto& scales : scale_sets) {
    for (std::size_t si = 0; si < subsets.size(); ++si) {
      ModelConfig cfg = base_cfg;
      cfg.scales = scales;
      std::vector<double> maes;
      for (std::uint64_t seed : seeds) {
        Model model = new_model(cfg, prepared[si].graph, seed);
        TrainConfig tc_run = tc;
        tc_run.seed = seed;
        train(model, prepared[si].ds, tc_run);
        maes.push_back(evaluate(model, prepared[si].ds.test, prepared[si].ds.normalizer).mae);
      }
      cells.push_back({subsets[si].name, scales, median(maes)});
    }
  }
  return cells;
}

}  // namespace msgw
