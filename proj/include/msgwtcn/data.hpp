#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msgwtcn/eigensolver.hpp"
#include "msgwtcn/error.hpp"
#include "msgwtcn/graph.hpp"
#include "msgwtcn/rng.hpp"

namespace msgw {

// ---------------------------------------------------------------------------
// Timestamps: ISO-8601 "YYYY-MM-DD HH:MM:SS" (T or space separator), UTC.

namespace detail {

// days since 1970-01-01 (Howard Hinnant's days_from_civil)
inline long long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 + static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

inline void civil_from_days(long long z, int& y, int& m, int& d) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long yy = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

}  // namespace detail

inline long long parse_iso8601(const std::string& s) {
  int y, mo, d, h, mi, se;
  char sep;
  if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &se) != 7 ||
      (sep != 'T' && sep != ' ') || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 ||
      mi < 0 || mi > 59 || se < 0 || se > 60)
    throw MalformedCsvError("bad ISO-8601 timestamp: '" + s + "'");
  return detail::days_from_civil(y, mo, d) * 86400LL + h * 3600LL + mi * 60LL + se;
}

inline std::string format_iso8601(long long epoch) {
  long long days = epoch / 86400;
  long long rem = epoch % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y, m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                static_cast<int>(rem % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// Speed series

// Uniformly spaced speed matrix with contiguous complete segments. Rows inside
// a gap longer than the interpolation budget stay invalid; windowing never
// crosses a segment boundary.
struct SpeedSeries {
  std::vector<long long> timestamps;  // uniform grid, epoch seconds
  long long dt = 300;
  std::vector<std::string> node_ids;  // sorted, matches the Graph
  std::vector<double> values;         // rows() x n(), row-major; undefined outside segments
  std::vector<std::pair<std::size_t, std::size_t>> segments;  // [start, end) complete rows
  int channels = 1;

  std::size_t rows() const { return timestamps.size(); }
  std::size_t n() const { return node_ids.size(); }
  double at(std::size_t t, std::size_t i) const { return values[t * n() + i]; }
  double& at(std::size_t t, std::size_t i) { return values[t * n() + i]; }
};

inline constexpr std::size_t kMaxInterpolateRun = 3;

inline SpeedSeries load_speed_csv(const std::string& path, const Graph* graph = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open speed csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw MalformedCsvError("speed csv empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "timestamp")
    throw MalformedCsvError("speed csv must start with 'timestamp,<node ids...>': " + path);
  std::vector<std::string> ids(header.begin() + 1, header.end());

  // column order in the file -> sorted node order
  std::vector<std::string> sorted_ids = ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  if (std::adjacent_find(sorted_ids.begin(), sorted_ids.end()) != sorted_ids.end())
    throw MalformedCsvError("speed csv has duplicate node columns");
  if (graph) {
    if (sorted_ids != graph->node_ids)
      throw UnknownNodeError("speed csv columns do not match the graph's node ids");
  }
  std::vector<std::size_t> col_to_node(ids.size());
  for (std::size_t c = 0; c < ids.size(); ++c) {
    const auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), ids[c]);
    col_to_node[c] = static_cast<std::size_t>(it - sorted_ids.begin());
  }
  const std::size_t n = ids.size();

  const double kMissing = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<long long, std::vector<double>>> raw_rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (cells.size() != n + 1)
      throw MalformedCsvError("speed csv line " + std::to_string(lineno) + ": expected " +
                              std::to_string(n + 1) + " cells, got " + std::to_string(cells.size()));
    std::vector<double> row(n, kMissing);
    for (std::size_t c = 0; c < n; ++c) {
      if (cells[c + 1].empty()) continue;
      char* end = nullptr;
      const double v = std::strtod(cells[c + 1].c_str(), &end);
      if (end == cells[c + 1].c_str() || *end != '\0' || !std::isfinite(v))
        throw MalformedCsvError("speed csv line " + std::to_string(lineno) + ": bad numeric cell '" +
                                cells[c + 1] + "'");
      if (v < 0)
        throw MalformedCsvError("speed csv line " + std::to_string(lineno) + ": negative speed for '" +
                                ids[c] + "'");
      row[col_to_node[c]] = v;
    }
    raw_rows.push_back({parse_iso8601(cells[0]), std::move(row)});
  }
  if (raw_rows.empty()) throw MalformedCsvError("speed csv has no data rows: " + path);
  std::sort(raw_rows.begin(), raw_rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t r = 1; r < raw_rows.size(); ++r)
    if (raw_rows[r].first == raw_rows[r - 1].first)
      throw MalformedCsvError("speed csv has duplicate timestamp " + format_iso8601(raw_rows[r].first));

  // spacing: every gap must be a whole multiple of the base interval
  long long dt = 300;
  if (raw_rows.size() > 1) {
    dt = std::numeric_limits<long long>::max();
    for (std::size_t r = 1; r < raw_rows.size(); ++r)
      dt = std::min(dt, raw_rows[r].first - raw_rows[r - 1].first);
    if (dt <= 0) throw NonUniformSpacingError("speed csv: non-increasing timestamps");
    for (std::size_t r = 1; r < raw_rows.size(); ++r)
      if ((raw_rows[r].first - raw_rows[r - 1].first) % dt != 0)
        throw NonUniformSpacingError("speed csv: spacing between " +
                                     format_iso8601(raw_rows[r - 1].first) + " and " +
                                     format_iso8601(raw_rows[r].first) +
                                     " is not a multiple of the base interval");
  }

  SpeedSeries s;
  s.node_ids = sorted_ids;
  s.dt = dt;
  const long long t0 = raw_rows.front().first;
  const std::size_t total = static_cast<std::size_t>((raw_rows.back().first - t0) / dt) + 1;
  s.timestamps.resize(total);
  for (std::size_t r = 0; r < total; ++r) s.timestamps[r] = t0 + static_cast<long long>(r) * dt;
  s.values.assign(total * n, kMissing);
  for (auto& [ts, row] : raw_rows) {
    const std::size_t r = static_cast<std::size_t>((ts - t0) / dt);
    std::copy(row.begin(), row.end(), s.values.begin() + static_cast<long>(r * n));
  }

  // per-node linear interpolation across short interior runs
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    while (r < total) {
      if (!std::isnan(s.at(r, i))) {
        ++r;
        continue;
      }
      std::size_t run_end = r;
      while (run_end < total && std::isnan(s.at(run_end, i))) ++run_end;
      const std::size_t run = run_end - r;
      if (r > 0 && run_end < total && run <= kMaxInterpolateRun) {
        const double lo = s.at(r - 1, i), hi = s.at(run_end, i);
        for (std::size_t k = 0; k < run; ++k)
          s.at(r + k, i) = lo + (hi - lo) * static_cast<double>(k + 1) / static_cast<double>(run + 1);
      }
      r = run_end;
    }
  }

  // complete rows form the segments; remaining gaps become breaks
  std::size_t seg_start = 0;
  bool in_seg = false;
  for (std::size_t r = 0; r < total; ++r) {
    bool complete = true;
    for (std::size_t i = 0; i < n; ++i)
      if (std::isnan(s.at(r, i))) {
        complete = false;
        break;
      }
    if (complete && !in_seg) {
      seg_start = r;
      in_seg = true;
    } else if (!complete && in_seg) {
      s.segments.push_back({seg_start, r});
      in_seg = false;
    }
    if (!complete)
      for (std::size_t i = 0; i < n; ++i) s.at(r, i) = 0.0;  // never read
  }
  if (in_seg) s.segments.push_back({seg_start, total});
  if (s.segments.empty()) throw MalformedCsvError("speed csv has no complete rows: " + path);
  return s;
}

inline void write_speed_csv(const SpeedSeries& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "timestamp";
  for (const auto& id : s.node_ids) out << ',' << id;
  out << '\n';
  char buf[64];
  for (const auto& [lo, hi] : s.segments) {
    for (std::size_t r = lo; r < hi; ++r) {
      out << format_iso8601(s.timestamps[r]);
      for (std::size_t i = 0; i < s.n(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.at(r, i));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out.good()) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Normalization (min-max to [0,1] on the training range)

struct Normalizer {
  bool per_node = true;
  std::vector<double> min_v, max_v;  // per node, or single entry in global mode

  double apply_one(double v, std::size_t node) const {
    const std::size_t k = per_node ? node : 0;
    const double u = (v - min_v[k]) / (max_v[k] - min_v[k]);
    return std::min(1.5, std::max(-0.5, u));
  }
  // exact inverse of the unclipped affine map
  double invert_one(double u, std::size_t node) const {
    const std::size_t k = per_node ? node : 0;
    return min_v[k] + u * (max_v[k] - min_v[k]);
  }
};

// Fit on rows [row_lo, row_hi) clipped to valid segments.
inline Normalizer fit_normalizer(const SpeedSeries& s, std::size_t row_lo, std::size_t row_hi,
                                 bool per_node = true) {
  const std::size_t n = s.n();
  const std::size_t buckets = per_node ? n : 1;
  Normalizer nm;
  nm.per_node = per_node;
  nm.min_v.assign(buckets, std::numeric_limits<double>::infinity());
  nm.max_v.assign(buckets, -std::numeric_limits<double>::infinity());
  bool any = false;
  for (const auto& [lo, hi] : s.segments) {
    const std::size_t a = std::max(lo, row_lo), b = std::min(hi, row_hi);
    for (std::size_t r = a; r < b; ++r) {
      any = true;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = per_node ? i : 0;
        nm.min_v[k] = std::min(nm.min_v[k], s.at(r, i));
        nm.max_v[k] = std::max(nm.max_v[k], s.at(r, i));
      }
    }
  }
  if (!any) throw EmptyDatasetError("fit_normalizer: no valid rows in the training range");
  for (std::size_t k = 0; k < buckets; ++k)
    if (!(nm.max_v[k] > nm.min_v[k]))
      throw ConstantNodeError("fit_normalizer: node '" +
                              (per_node ? s.node_ids[k] : std::string("<global>")) +
                              "' is constant on the training range");
  return nm;
}

// ---------------------------------------------------------------------------
// Supervised windows

struct SampleSet {
  std::size_t history = 0, horizon = 0, nodes = 0, channels = 1;
  std::vector<double> inputs;       // [count, P, N, C], normalized
  std::vector<double> targets;      // [count, T, N, C], normalized
  std::vector<double> targets_raw;  // [count, T, N, C], original units
  std::vector<double> inputs_last_raw;  // [count, N, C]; persistence baseline source
  std::vector<long long> target_times;  // first target timestamp per sample
  std::string split_tag;

  std::size_t count() const {
    const std::size_t per = history * nodes * channels;
    return per == 0 ? 0 : inputs.size() / per;
  }
};

// Raw sliding windows (stride 1) that never cross a segment break. Segments
// shorter than P+T contribute nothing; TooShort fires only when no window
// exists at all.
inline SampleSet window(const SpeedSeries& s, std::size_t p, std::size_t t) {
  if (p < 1 || t < 1) throw ConfigError("window: P and T must be >= 1");
  SampleSet set;
  set.history = p;
  set.horizon = t;
  set.nodes = s.n();
  set.channels = 1;
  const std::size_t n = s.n();
  for (const auto& [lo, hi] : s.segments) {
    if (hi - lo < p + t) continue;
    for (std::size_t start = lo; start + p + t <= hi; ++start) {
      for (std::size_t r = start; r < start + p; ++r)
        set.inputs.insert(set.inputs.end(), s.values.begin() + static_cast<long>(r * n),
                          s.values.begin() + static_cast<long>((r + 1) * n));
      for (std::size_t r = start + p; r < start + p + t; ++r)
        set.targets.insert(set.targets.end(), s.values.begin() + static_cast<long>(r * n),
                           s.values.begin() + static_cast<long>((r + 1) * n));
      const std::size_t last = start + p - 1;
      set.inputs_last_raw.insert(set.inputs_last_raw.end(),
                                 s.values.begin() + static_cast<long>(last * n),
                                 s.values.begin() + static_cast<long>((last + 1) * n));
      set.target_times.push_back(s.timestamps[start + p]);
    }
  }
  if (set.target_times.empty())
    throw TooShortError("window: no segment is long enough for P=" + std::to_string(p) +
                        " T=" + std::to_string(t));
  set.targets_raw = set.targets;
  return set;
}

struct SplitResult {
  SampleSet train, val, test;
};

// Contiguous chronological split; floor for train/val, remainder to test.
inline SplitResult chronological_split(const SampleSet& all, const std::vector<double>& fractions) {
  if (fractions.size() != 3) throw ConfigError("chronological_split: need 3 fractions");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("chronological_split: fractions must all be > 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("chronological_split: fractions must sum to 1");

  const std::size_t n = all.count();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n)));
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw EmptyDatasetError("chronological_split: a split is empty (" + std::to_string(n_train) + "/" +
                            std::to_string(n_val) + "/" + std::to_string(n_test) + ")");

  auto slice = [&](std::size_t lo, std::size_t hi, const char* tag) {
    SampleSet out;
    out.history = all.history;
    out.horizon = all.horizon;
    out.nodes = all.nodes;
    out.channels = all.channels;
    out.split_tag = tag;
    const std::size_t in_per = all.history * all.nodes * all.channels;
    const std::size_t out_per = all.horizon * all.nodes * all.channels;
    out.inputs.assign(all.inputs.begin() + static_cast<long>(lo * in_per),
                      all.inputs.begin() + static_cast<long>(hi * in_per));
    out.targets.assign(all.targets.begin() + static_cast<long>(lo * out_per),
                       all.targets.begin() + static_cast<long>(hi * out_per));
    out.targets_raw.assign(all.targets_raw.begin() + static_cast<long>(lo * out_per),
                           all.targets_raw.begin() + static_cast<long>(hi * out_per));
    const std::size_t last_per = all.nodes * all.channels;
    out.inputs_last_raw.assign(all.inputs_last_raw.begin() + static_cast<long>(lo * last_per),
                               all.inputs_last_raw.begin() + static_cast<long>(hi * last_per));
    out.target_times.assign(all.target_times.begin() + static_cast<long>(lo),
                            all.target_times.begin() + static_cast<long>(hi));
    return out;
  };
  return {slice(0, n_train, "train"), slice(n_train, n_train + n_val, "val"),
          slice(n_train + n_val, n, "test")};
}

// ---------------------------------------------------------------------------
// The assembled supervised dataset

struct Dataset {
  SampleSet train, val, test;
  Normalizer normalizer;
};

// Windows the series, splits chronologically, fits the normalizer on the rows
// covered by the train windows only, then normalizes all splits in place.
inline Dataset make_dataset(const SpeedSeries& series, std::size_t p, std::size_t t,
                            const std::vector<double>& fractions = {0.7, 0.1, 0.2},
                            bool per_node_norm = true) {
  SampleSet all = window(series, p, t);
  SplitResult split = chronological_split(all, fractions);

  // the train range ends at the last target row used by a train window
  const long long train_last_ts =
      split.train.target_times.back() + static_cast<long long>(t - 1) * series.dt;
  std::size_t row_hi = 0;
  while (row_hi < series.rows() && series.timestamps[row_hi] <= train_last_ts) ++row_hi;

  Dataset ds;
  ds.normalizer = fit_normalizer(series, 0, row_hi, per_node_norm);
  for (SampleSet* set : {&split.train, &split.val, &split.test}) {
    const std::size_t n = set->nodes;
    for (std::size_t i = 0; i < set->inputs.size(); ++i)
      set->inputs[i] = ds.normalizer.apply_one(set->inputs[i], i % n);
    for (std::size_t i = 0; i < set->targets.size(); ++i)
      set->targets[i] = ds.normalizer.apply_one(set->targets[i], i % n);
  }
  ds.train = std::move(split.train);
  ds.val = std::move(split.val);
  ds.test = std::move(split.test);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic multi-scale traffic
//
// Congestion diffuses by c_{t+1} = (1-beta) (I - alpha L_norm) c_t plus
// i.i.d. injections (probability p, magnitude m per node); speeds are
// v_i(t) = clamp(v_free_i - c_i(t) + a sin(2 pi t / 288), 0, v_free_i).
// Topologies: grid(w,h); two_community(n1,n2,bridges); hybrid_highway_grid
// (grid + highway chain tapping it at even intervals, "h*" ids get highway
// free-flow speeds).

struct SynthParams {
  std::string topology = "grid";
  int width = 6, height = 8;
  int n1 = 20, n2 = 20, bridges = 2;
  int highway_len = 8;
  long steps = 2000;
  double alpha = 0.3;
  double beta = 0.05;
  double p_inject = 0.01;
  double magnitude = 20.0;
  double sin_amplitude = 3.0;
};

struct SynthResult {
  Graph graph;
  SpeedSeries series;
};

inline SynthResult synth_generate(const SynthParams& p, std::uint64_t seed) {
  if (p.steps < 500) throw ConfigError("synth_generate: steps must be >= 500");
  if (!(p.p_inject >= 0.0 && p.p_inject <= 1.0))
    throw ConfigError("synth_generate: p_inject must be in [0,1]");

  Graph g;
  if (p.topology == "grid")
    g = make_grid_graph(p.width, p.height);
  else if (p.topology == "two_community")
    g = make_two_community_graph(p.n1, p.n2, p.bridges);
  else if (p.topology == "hybrid_highway_grid")
    g = make_hybrid_highway_grid_graph(p.width, p.height, p.highway_len);
  else
    throw ConfigError("synth_generate: unknown topology '" + p.topology + "'");

  const std::size_t n = static_cast<std::size_t>(g.n);
  DenseMatrix l = laplacian(g, LaplacianKind::symmetric_normalized);
  DenseMatrix op(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      op(i, j) = (1.0 - p.beta) * ((i == j ? 1.0 : 0.0) - p.alpha * l(i, j));

  // bounded congestion requires spectral radius < 1
  EigenSystem es = eig_sym(l);
  double radius = 0.0;
  for (double lam : es.eigenvalues)
    radius = std::max(radius, std::abs((1.0 - p.beta) * (1.0 - p.alpha * lam)));
  if (radius > 1.0)
    throw ConfigError("synth_generate: diffusion operator spectral radius " + std::to_string(radius) +
                      " > 1 (unstable alpha/beta)");

  Rng vfree_rng = Rng(seed).fork("synth/vfree");
  std::vector<double> v_free(n);
  for (std::size_t i = 0; i < n; ++i)
    v_free[i] = g.node_ids[i].rfind("h", 0) == 0 ? vfree_rng.uniform(55.0, 70.0)
                                                 : vfree_rng.uniform(45.0, 65.0);

  Rng inject_rng = Rng(seed).fork("synth/inject");
  SpeedSeries s;
  s.node_ids = g.node_ids;
  s.dt = 300;
  const long long t0 = parse_iso8601("2021-01-01T00:00:00");
  s.timestamps.resize(static_cast<std::size_t>(p.steps));
  s.values.resize(static_cast<std::size_t>(p.steps) * n);
  s.segments.push_back({0, static_cast<std::size_t>(p.steps)});

  const double pi2 = 2.0 * 3.14159265358979323846;
  std::vector<double> c(n, 0.0), cn(n);
  for (long t = 0; t < p.steps; ++t) {
    s.timestamps[static_cast<std::size_t>(t)] = t0 + t * 300;
    const double daily = p.sin_amplitude * std::sin(pi2 * static_cast<double>(t) / 288.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = v_free[i] - c[i] + daily;
      s.at(static_cast<std::size_t>(t), i) = std::min(v_free[i], std::max(0.0, v));
    }
    cn = matvec(op, c);
    for (std::size_t i = 0; i < n; ++i)
      if (inject_rng.bernoulli(p.p_inject)) cn[i] += p.magnitude;
    c.swap(cn);
  }
  return {std::move(g), std::move(s)};
}

// Diffusion step operator, exposed for tests of the spreading behaviour.
inline DenseMatrix synth_diffusion_operator(const Graph& g, double alpha, double beta) {
  DenseMatrix l = laplacian(g, LaplacianKind::symmetric_normalized);
  DenseMatrix op(l.rows(), l.cols());
  for (std::size_t i = 0; i < l.rows(); ++i)
    for (std::size_t j = 0; j < l.cols(); ++j)
      op(i, j) = (1.0 - beta) * ((i == j ? 1.0 : 0.0) - alpha * l(i, j));
  return op;
}

}  // namespace msgw
