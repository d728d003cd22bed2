// Command-line entry point for the forecasting pipeline: synthetic data
// generation, training, evaluation, prediction, weight analysis, network
// ablation, and scale sensitivity scans. One JSON config document drives
// everything; --set key=value overrides individual entries.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "msgwtcn/analysis.hpp"
#include "msgwtcn/config.hpp"

namespace {

using namespace msgw;

struct CliOverrides {
  std::string config_path;
  std::string outdir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_scale(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void apply_set(nlohmann::json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // plain string
  }

  nlohmann::json* cur = &doc;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("--set: empty key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
  (*cur)[parts.back()] = value;
}

RunConfig load_config(const CliOverrides& cli) {
  nlohmann::json doc = nlohmann::json::object();
  if (!cli.config_path.empty()) {
    std::ifstream in(cli.config_path);
    if (!in) throw IoError("cannot open config: " + cli.config_path);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config parse error in " + cli.config_path + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  }
  for (const std::string& kv : cli.sets) apply_set(doc, kv);
  RunConfig cfg = run_config_from_json(doc);
  if (!cli.outdir.empty()) cfg.outdir = cli.outdir;
  if (cli.seed) {
    cfg.seed = *cli.seed;
    cfg.train.seed = *cli.seed;
  }
  return cfg;
}

void prepare_outdir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.outdir, ec);
  if (ec) throw IoError("cannot create outdir '" + cfg.outdir + "': " + ec.message());
  write_resolved_config(cfg, cfg.outdir + "/config.resolved.json");
}

Graph load_graph(const RunConfig& cfg) {
  if (cfg.data.edges_csv.empty()) throw ConfigError("data.edges_csv is required");
  return load_edge_csv(cfg.data.edges_csv);
}

Dataset load_dataset(const RunConfig& cfg, const Graph& graph) {
  if (cfg.data.speeds_csv.empty()) throw ConfigError("data.speeds_csv is required");
  SpeedSeries series = load_speed_csv(cfg.data.speeds_csv, &graph);
  return make_dataset(series, static_cast<std::size_t>(cfg.model.history),
                      static_cast<std::size_t>(cfg.model.horizon), cfg.data.split,
                      cfg.data.per_node());
}

const SampleSet& pick_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw ConfigError("eval_split must be train|val|test, got '" + split + "'");
}

// ---------------------------------------------------------------------------

void cmd_gen_synth(const RunConfig& cfg) {
  prepare_outdir(cfg);
  SynthResult synth = synth_generate(cfg.synth, cfg.seed);
  write_edge_csv(synth.graph, cfg.outdir + "/edges.csv");
  write_speed_csv(synth.series, cfg.outdir + "/speeds.csv");

  nlohmann::json manifest{{"seed", cfg.seed},
                          {"synth", synth_params_to_json(cfg.synth)},
                          {"nodes", synth.graph.n},
                          {"rows", synth.series.rows()}};
  std::ofstream out(cfg.outdir + "/manifest.json");
  if (!out) throw IoError("cannot write manifest");
  out << manifest.dump(2) << '\n';
  std::cerr << "gen-synth: " << synth.graph.n << " nodes, " << synth.series.rows()
            << " rows -> " << cfg.outdir << "\n";
}

void cmd_train(const RunConfig& cfg) {
  prepare_outdir(cfg);
  Graph graph = load_graph(cfg);
  Dataset ds = load_dataset(cfg, graph);
  Model model = new_model(cfg.model, graph, cfg.seed);
  std::cerr << "train: N=" << graph.n << " params=" << model.parameter_count()
            << " train/val/test=" << ds.train.count() << "/" << ds.val.count() << "/"
            << ds.test.count() << "\n";

  TrainHistory history = train(model, ds, cfg.train, cfg.outdir + "/history.csv");
  save_checkpoint(model, cfg.checkpoint_path());

  nlohmann::json summary{{"best_epoch", history.best_epoch},
                         {"best_val_mae", history.best_val_mae},
                         {"epochs_run", history.rows.size()},
                         {"parameter_count", model.parameter_count()},
                         {"persistence_val_mae", persistence_mae(ds.val)}};
  std::ofstream out(cfg.outdir + "/train_summary.json");
  if (!out) throw IoError("cannot write train summary");
  out << summary.dump(2) << '\n';
  std::cerr << "train: best epoch " << history.best_epoch << " val MAE " << history.best_val_mae
            << "\n";
}

void cmd_evaluate(const RunConfig& cfg) {
  prepare_outdir(cfg);
  Graph graph = load_graph(cfg);
  Dataset ds = load_dataset(cfg, graph);
  Model model = load_checkpoint(cfg.checkpoint_path(), graph);
  Metrics m = evaluate(model, pick_split(ds, cfg.eval_split), ds.normalizer);

  nlohmann::json j{{"mae", m.mae}, {"rmse_norm", m.rmse_norm}, {"rmse_denorm", m.rmse_denorm}};
  std::cout << j.dump() << "\n";
  std::ofstream out(cfg.outdir + "/metrics.json");
  if (!out) throw IoError("cannot write metrics.json");
  out << j.dump(2) << '\n';
}

void cmd_predict(const RunConfig& cfg) {
  prepare_outdir(cfg);
  Graph graph = load_graph(cfg);
  Dataset ds = load_dataset(cfg, graph);
  Model model = load_checkpoint(cfg.checkpoint_path(), graph);
  const SampleSet& set = pick_split(ds, cfg.eval_split);

  std::ofstream out(cfg.outdir + "/predictions.csv");
  if (!out) throw IoError("cannot write predictions.csv");
  out << "window,target_timestamp";
  for (std::size_t h = 0; h < set.horizon; ++h)
    for (const auto& id : graph.node_ids) out << ',' << id << "+" << (h + 1);
  out << '\n';

  const std::size_t n = set.nodes;
  const std::size_t per = set.horizon * n * set.channels;
  std::vector<std::size_t> order(set.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t chunk = 64;
  for (std::size_t lo = 0; lo < set.count(); lo += chunk) {
    const std::size_t hi = std::min(set.count(), lo + chunk);
    Tensor x = detail::gather_inputs(set, order, lo, hi);
    Tensor pred = model.forward(nullptr, x);
    for (std::size_t k = lo; k < hi; ++k) {
      out << k << ',' << format_iso8601(set.target_times[k]);
      const double* p = pred.value().data() + (k - lo) * per;
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t node = (i / set.channels) % n;
        out << ',' << fmt17(ds.normalizer.invert_one(p[i], node));
      }
      out << '\n';
    }
  }
  if (!out.good()) throw IoError("predictions.csv write failed");
  std::cerr << "predict: " << set.count() << " windows -> " << cfg.outdir << "/predictions.csv\n";
}

void cmd_analyze(const RunConfig& cfg) {
  prepare_outdir(cfg);
  Model model = load_checkpoint(cfg.checkpoint_path());

  {
    std::ofstream out(cfg.outdir + "/diagonal_report.csv");
    if (!out) throw IoError("cannot write diagonal_report.csv");
    out << "layer,scale,norm_before,norm_after,rel_drop\n";
    for (const auto& r : diagonal_contribution_report(model))
      out << r.layer << ',' << fmt_scale(r.scale) << ',' << fmt17(r.norm_before) << ','
          << fmt17(r.norm_after) << ',' << fmt17(r.rel_drop) << '\n';
  }
  {
    std::ofstream out(cfg.outdir + "/link_scores.csv");
    if (!out) throw IoError("cannot write link_scores.csv");
    out << "node_id,scale,score,rank,top_flag\n";
    for (const auto& ls : link_importance(model, cfg.analyze.percentile))
      out << ls.node_id << ',' << fmt_scale(ls.scale) << ',' << fmt17(ls.score) << ',' << ls.rank
          << ',' << (ls.top ? 1 : 0) << '\n';
  }
  if (cfg.analyze.export_bases) {
    for (const auto& basis : model.bases) {
      write_matrix_csv(basis->psi, cfg.outdir + "/basis_s" + fmt_scale(basis->scale) + ".csv");
      write_matrix_csv(basis->psi_inv,
                       cfg.outdir + "/basis_inv_s" + fmt_scale(basis->scale) + ".csv");
    }
  }
  if (cfg.analyze.export_weight_matrices) {
    for (const auto& wm : extract_weight_matrices(model))
      write_matrix_csv(wm.w, cfg.outdir + "/weight_l" + std::to_string(wm.layer) + "_s" +
                                 fmt_scale(wm.scale) + ".csv");
  }
  std::cerr << "analyze: reports in " << cfg.outdir << "\n";
}

void cmd_scale_scan(const RunConfig& cfg) {
  prepare_outdir(cfg);
  Graph graph = load_graph(cfg);
  Dataset ds = load_dataset(cfg, graph);
  auto rows = scale_scan(graph, ds, cfg.scan.scale_grid, cfg.model, cfg.train, cfg.effective_seeds());

  std::ofstream out(cfg.outdir + "/scan.csv");
  if (!out) throw IoError("cannot write scan.csv");
  out << "scale,median_val_mae\n";
  for (const auto& r : rows) out << fmt_scale(r.scale) << ',' << fmt17(r.median_val_mae) << '\n';
  std::cerr << "scale-scan: " << rows.size() << " grid points -> " << cfg.outdir << "/scan.csv\n";
}

void cmd_ablate(const RunConfig& cfg) {
  prepare_outdir(cfg);
  Graph graph = load_graph(cfg);
  if (cfg.data.speeds_csv.empty()) throw ConfigError("data.speeds_csv is required");
  SpeedSeries series = load_speed_csv(cfg.data.speeds_csv, &graph);

  std::vector<NodeSubset> subsets = cfg.ablate.subsets;
  if (subsets.empty()) subsets.push_back({"all", graph.node_ids});

  auto cells = ablation_run(graph, series, subsets, cfg.ablate.scale_sets, cfg.model, cfg.train,
                            cfg.effective_seeds(), cfg.data.split);

  std::ofstream out(cfg.outdir + "/ablation.csv");
  if (!out) throw IoError("cannot write ablation.csv");
  out << "scale_set";
  for (const auto& s : subsets) out << ',' << s.name;
  out << '\n';
  std::size_t idx = 0;
  for (const auto& scales : cfg.ablate.scale_sets) {
    std::string label;
    for (std::size_t i = 0; i < scales.size(); ++i)
      label += (i ? "|" : "") + std::string(fmt_scale(scales[i]));
    out << label;
    for (std::size_t s = 0; s < subsets.size(); ++s) out << ',' << fmt17(cells[idx++].median_test_mae);
    out << '\n';
  }
  std::cerr << "ablate: " << cfg.ablate.scale_sets.size() << "x" << subsets.size() << " table -> "
            << cfg.outdir << "/ablation.csv\n";
}

std::string config_key_help() {
  RunConfig defaults;
  nlohmann::json j = run_config_to_json(defaults);
  std::string out = "Config keys (JSON document or --set key=value) and defaults:\n";
  std::function<void(const nlohmann::json&, const std::string&)> walk =
      [&](const nlohmann::json& node, const std::string& prefix) {
        for (const auto& [key, value] : node.items()) {
          const std::string path = prefix.empty() ? key : prefix + "." + key;
          if (value.is_object() && !value.empty())
            walk(value, path);
          else
            out += "  " + path + " (default " + value.dump() + ")\n";
        }
      };
  walk(j, "");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale graph wavelet temporal convolution network pipeline"};
  app.require_subcommand(1);

  CliOverrides cli;
  const std::string keys = config_key_help();

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", cli.config_path, "JSON config file");
    sub->add_option("--outdir", cli.outdir, "output directory (overrides config)");
    sub->add_option("--seed", cli.seed, "top-level seed (overrides config)");
    sub->add_option("--set", cli.sets, "override one config key, e.g. --set model.hidden_channels=16")
        ->take_all();
    sub->footer(keys);
    return sub;
  };

  auto* gen = add_common(app.add_subcommand("gen-synth", "generate a synthetic graph + speed CSV pair"));
  auto* tr = add_common(app.add_subcommand("train", "train a model, write checkpoint + history"));
  auto* ev = add_common(app.add_subcommand("evaluate", "evaluate a checkpoint, print metrics JSON"));
  auto* pr = add_common(app.add_subcommand("predict", "write per-window predictions CSV"));
  auto* an = add_common(app.add_subcommand("analyze", "weight-matrix analysis reports"));
  auto* ab = add_common(app.add_subcommand("ablate", "subnetwork x scale-set ablation table"));
  auto* sc = add_common(app.add_subcommand("scale-scan", "single-scale sensitivity scan"));

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = load_config(cli);
    if (gen->parsed()) cmd_gen_synth(cfg);
    if (tr->parsed()) cmd_train(cfg);
    if (ev->parsed()) cmd_evaluate(cfg);
    if (pr->parsed()) cmd_predict(cfg);
    if (an->parsed()) cmd_analyze(cfg);
    if (ab->parsed()) cmd_ablate(cfg);
    if (sc->parsed()) cmd_scale_scan(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
