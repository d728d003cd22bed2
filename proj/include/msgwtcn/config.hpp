#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msgwtcn/data.hpp"
#include "msgwtcn/model.hpp"
#include "msgwtcn/train.hpp"

namespace msgw {

struct DataConfig {
  std::string edges_csv;
  std::string speeds_csv;
  std::vector<double> split = {0.7, 0.1, 0.2};
  std::string normalization = "per_node";  // or "global"

  bool per_node() const {
    if (normalization == "per_node") return true;
    if (normalization == "global") return false;
    throw ConfigError("data.normalization must be per_node|global");
  }
};

struct AnalyzeConfig {
  double percentile = 5.0;
  bool export_bases = false;
  bool export_weight_matrices = false;
};

struct ScanConfig {
  std::vector<double> scale_grid = {0.5, 1.5, 3.0, 4.5, 6.0};
};

struct AblateConfig {
  std::vector<NodeSubset> subsets;  // empty -> {"all", every node}
  std::vector<std::vector<double>> scale_sets = {
      {0.85, 0.85, 0.85}, {3.85, 3.85, 3.85}, {5.85, 5.85, 5.85}, {0.85, 3.85, 5.85}};
};

// One JSON document drives every subcommand; unknown keys are rejected and
// the effective values are echoed to <outdir>/config.resolved.json.
struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // empty -> {seed, seed+1, seed+2}
  std::string outdir = "out";
  std::string checkpoint;  // empty -> <outdir>/checkpoint.bin
  std::string eval_split = "test";
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  SynthParams synth;
  AnalyzeConfig analyze;
  ScanConfig scan;
  AblateConfig ablate;

  std::vector<std::uint64_t> effective_seeds() const {
    if (!seeds.empty()) return seeds;
    return {seed, seed + 1, seed + 2};
  }
  std::string checkpoint_path() const {
    return checkpoint.empty() ? outdir + "/checkpoint.bin" : checkpoint;
  }
};

namespace detail {

template <typename T>
void read_key(const nlohmann::json& j, const std::string& key, T& out) {
  try {
    out = j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"learning_rate", c.learning_rate},
                        {"rmsprop_alpha", c.rmsprop_alpha},
                        {"rmsprop_eps", c.rmsprop_eps},
                        {"batch_size", c.batch_size},
                        {"max_epochs", c.max_epochs},
                        {"early_stop_patience", c.early_stop_patience},
                        {"gradient_clip_norm", c.gradient_clip_norm},
                        {"microbatch_size", c.microbatch_size},
                        {"log_wall_time", c.log_wall_time}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate")
      detail::read_key(value, key, c.learning_rate);
    else if (key == "rmsprop_alpha")
      detail::read_key(value, key, c.rmsprop_alpha);
    else if (key == "rmsprop_eps")
      detail::read_key(value, key, c.rmsprop_eps);
    else if (key == "batch_size")
      detail::read_key(value, key, c.batch_size);
    else if (key == "max_epochs")
      detail::read_key(value, key, c.max_epochs);
    else if (key == "early_stop_patience")
      detail::read_key(value, key, c.early_stop_patience);
    else if (key == "gradient_clip_norm")
      detail::read_key(value, key, c.gradient_clip_norm);
    else if (key == "microbatch_size")
      detail::read_key(value, key, c.microbatch_size);
    else if (key == "log_wall_time")
      detail::read_key(value, key, c.log_wall_time);
    else
      throw ConfigError("unknown train config key '" + key + "'");
  }
  return c;
}

inline nlohmann::json synth_params_to_json(const SynthParams& p) {
  return nlohmann::json{{"topology", p.topology},
                        {"width", p.width},
                        {"height", p.height},
                        {"n1", p.n1},
                        {"n2", p.n2},
                        {"bridges", p.bridges},
                        {"highway_len", p.highway_len},
                        {"steps", p.steps},
                        {"alpha", p.alpha},
                        {"beta", p.beta},
                        {"p_inject", p.p_inject},
                        {"magnitude", p.magnitude},
                        {"sin_amplitude", p.sin_amplitude}};
}

inline SynthParams synth_params_from_json(const nlohmann::json& j) {
  SynthParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "topology")
      detail::read_key(value, key, p.topology);
    else if (key == "width")
      detail::read_key(value, key, p.width);
    else if (key == "height")
      detail::read_key(value, key, p.height);
    else if (key == "n1")
      detail::read_key(value, key, p.n1);
    else if (key == "n2")
      detail::read_key(value, key, p.n2);
    else if (key == "bridges")
      detail::read_key(value, key, p.bridges);
    else if (key == "highway_len")
      detail::read_key(value, key, p.highway_len);
    else if (key == "steps")
      detail::read_key(value, key, p.steps);
    else if (key == "alpha")
      detail::read_key(value, key, p.alpha);
    else if (key == "beta")
      detail::read_key(value, key, p.beta);
    else if (key == "p_inject")
      detail::read_key(value, key, p.p_inject);
    else if (key == "magnitude")
      detail::read_key(value, key, p.magnitude);
    else if (key == "sin_amplitude")
      detail::read_key(value, key, p.sin_amplitude);
    else
      throw ConfigError("unknown synth config key '" + key + "'");
  }
  return p;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json subsets = nlohmann::json::object();
  for (const auto& s : c.ablate.subsets) subsets[s.name] = s.node_ids;
  return nlohmann::json{
      {"seed", c.seed},
      {"seeds", c.seeds},
      {"outdir", c.outdir},
      {"checkpoint", c.checkpoint},
      {"eval_split", c.eval_split},
      {"model", model_config_to_json(c.model)},
      {"train", train_config_to_json(c.train)},
      {"data",
       {{"edges_csv", c.data.edges_csv},
        {"speeds_csv", c.data.speeds_csv},
        {"split", c.data.split},
        {"normalization", c.data.normalization}}},
      {"synth", synth_params_to_json(c.synth)},
      {"analyze",
       {{"percentile", c.analyze.percentile},
        {"export_bases", c.analyze.export_bases},
        {"export_weight_matrices", c.analyze.export_weight_matrices}}},
      {"scan", {{"scale_grid", c.scan.scale_grid}}},
      {"ablate", {{"subsets", subsets}, {"scale_sets", c.ablate.scale_sets}}}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed")
      detail::read_key(value, key, c.seed);
    else if (key == "seeds")
      detail::read_key(value, key, c.seeds);
    else if (key == "outdir")
      detail::read_key(value, key, c.outdir);
    else if (key == "checkpoint")
      detail::read_key(value, key, c.checkpoint);
    else if (key == "eval_split")
      detail::read_key(value, key, c.eval_split);
    else if (key == "model")
      c.model = model_config_from_json(value);
    else if (key == "train")
      c.train = train_config_from_json(value, 0);
    else if (key == "data") {
      for (const auto& [dk, dv] : value.items()) {
        if (dk == "edges_csv")
          detail::read_key(dv, dk, c.data.edges_csv);
        else if (dk == "speeds_csv")
          detail::read_key(dv, dk, c.data.speeds_csv);
        else if (dk == "split")
          detail::read_key(dv, dk, c.data.split);
        else if (dk == "normalization")
          detail::read_key(dv, dk, c.data.normalization);
        else
          throw ConfigError("unknown data config key '" + dk + "'");
      }
    } else if (key == "synth")
      c.synth = synth_params_from_json(value);
    else if (key == "analyze") {
      for (const auto& [ak, av] : value.items()) {
        if (ak == "percentile")
          detail::read_key(av, ak, c.analyze.percentile);
        else if (ak == "export_bases")
          detail::read_key(av, ak, c.analyze.export_bases);
        else if (ak == "export_weight_matrices")
          detail::read_key(av, ak, c.analyze.export_weight_matrices);
        else
          throw ConfigError("unknown analyze config key '" + ak + "'");
      }
    } else if (key == "scan") {
      for (const auto& [sk, sv] : value.items()) {
        if (sk == "scale_grid")
          detail::read_key(sv, sk, c.scan.scale_grid);
        else
          throw ConfigError("unknown scan config key '" + sk + "'");
      }
    } else if (key == "ablate") {
      for (const auto& [ak, av] : value.items()) {
        if (ak == "subsets") {
          for (const auto& [name, ids] : av.items()) {
            NodeSubset s;
            s.name = name;
            detail::read_key(ids, "ablate.subsets." + name, s.node_ids);
            c.ablate.subsets.push_back(std::move(s));
          }
        } else if (ak == "scale_sets")
          detail::read_key(av, ak, c.ablate.scale_sets);
        else
          throw ConfigError("unknown ablate config key '" + ak + "'");
      }
    } else
      throw ConfigError("unknown config key '" + key + "'");
  }
  c.train.seed = c.seed;
  return c;
}

inline void write_resolved_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write resolved config: " + path);
  out << run_config_to_json(c).dump(2) << '\n';
  if (!out.good()) throw IoError("resolved config write failed: " + path);
}

}  // namespace msgw
