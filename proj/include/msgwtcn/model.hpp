#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msgwtcn/graph.hpp"
#include "msgwtcn/nn.hpp"
#include "msgwtcn/rng.hpp"
#include "msgwtcn/spectral.hpp"
#include "msgwtcn/tensor.hpp"

namespace msgw {

enum class Aggregation { sum, concat_linear };

inline std::string to_string(Aggregation a) {
  return a == Aggregation::sum ? "sum" : "concat_linear";
}
inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "sum") return Aggregation::sum;
  if (s == "concat_linear") return Aggregation::concat_linear;
  throw ConfigError("unknown aggregation '" + s + "' (expected sum|concat_linear)");
}

inline std::string to_string(LaplacianKind k) {
  return k == LaplacianKind::combinatorial ? "combinatorial" : "symmetric_normalized";
}
inline LaplacianKind laplacian_kind_from_string(const std::string& s) {
  if (s == "combinatorial") return LaplacianKind::combinatorial;
  if (s == "symmetric_normalized") return LaplacianKind::symmetric_normalized;
  throw ConfigError("unknown laplacian kind '" + s + "'");
}

struct ModelConfig {
  int num_layers = 8;
  std::vector<int> dilation_cycle = {1, 2};
  int temporal_kernel_width = 2;
  int hidden_channels = 32;
  std::vector<double> scales = {0.85, 3.85, 5.85};
  int chebyshev_order = 3;
  bool exact_basis = false;
  double sparsify_threshold = 1e-4;
  double dropout_p = 0.5;
  Aggregation aggregation = Aggregation::sum;
  int history = 12;   // P
  int horizon = 1;    // T
  int channels = 1;   // C
  LaplacianKind laplacian_kind = LaplacianKind::symmetric_normalized;

  int dilation_for_layer(int layer) const {
    return dilation_cycle[static_cast<std::size_t>(layer) % dilation_cycle.size()];
  }

  int receptive_field() const {
    int sum_d = 0;
    for (int l = 0; l < num_layers; ++l) sum_d += dilation_for_layer(l);
    return 1 + (temporal_kernel_width - 1) * sum_d;
  }

  void validate() const {
    if (num_layers < 1) throw ConfigError("model.num_layers must be >= 1");
    if (scales.empty()) throw ConfigError("model.scales must not be empty");
    for (double s : scales)
      if (!(s > 0.0)) throw ConfigError("model.scales must all be > 0");
    if (dilation_cycle.empty()) throw ConfigError("model.dilation_cycle must not be empty");
    for (int d : dilation_cycle)
      if (d < 1) throw ConfigError("model.dilation_cycle entries must be >= 1");
    if (temporal_kernel_width < 1) throw ConfigError("model.temporal_kernel_width must be >= 1");
    if (hidden_channels < 1) throw ConfigError("model.hidden_channels must be >= 1");
    if (chebyshev_order < 0) throw ConfigError("model.chebyshev_order must be >= 0");
    if (sparsify_threshold < 0) throw ConfigError("model.sparsify_threshold must be >= 0");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("model.dropout_p must be in [0,1)");
    if (history < 1 || horizon < 1 || channels < 1)
      throw ConfigError("model.history/horizon/channels must be >= 1");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"num_layers", c.num_layers},
                        {"dilation_cycle", c.dilation_cycle},
                        {"temporal_kernel_width", c.temporal_kernel_width},
                        {"hidden_channels", c.hidden_channels},
                        {"scales", c.scales},
                        {"chebyshev_order", c.chebyshev_order},
                        {"exact_basis", c.exact_basis},
                        {"sparsify_threshold", c.sparsify_threshold},
                        {"dropout_p", c.dropout_p},
                        {"aggregation", to_string(c.aggregation)},
                        {"history", c.history},
                        {"horizon", c.horizon},
                        {"channels", c.channels},
                        {"laplacian", to_string(c.laplacian_kind)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "num_layers")
      c.num_layers = value.get<int>();
    else if (key == "dilation_cycle")
      c.dilation_cycle = value.get<std::vector<int>>();
    else if (key == "temporal_kernel_width")
      c.temporal_kernel_width = value.get<int>();
    else if (key == "hidden_channels")
      c.hidden_channels = value.get<int>();
    else if (key == "scales")
      c.scales = value.get<std::vector<double>>();
    else if (key == "chebyshev_order")
      c.chebyshev_order = value.get<int>();
    else if (key == "exact_basis")
      c.exact_basis = value.get<bool>();
    else if (key == "sparsify_threshold")
      c.sparsify_threshold = value.get<double>();
    else if (key == "dropout_p")
      c.dropout_p = value.get<double>();
    else if (key == "aggregation")
      c.aggregation = aggregation_from_string(value.get<std::string>());
    else if (key == "history")
      c.history = value.get<int>();
    else if (key == "horizon")
      c.horizon = value.get<int>();
    else if (key == "channels")
      c.channels = value.get<int>();
    else if (key == "laplacian")
      c.laplacian_kind = laplacian_kind_from_string(value.get<std::string>());
    else
      throw ConfigError("unknown model config key '" + key + "'");
  }
  return c;
}

struct GatedTcnBlock {
  Tensor filter_weights;  // [F, F, width]
  Tensor gate_weights;    // [F, F, width]
  int dilation = 1;
};

struct MsSpatialBlock {
  std::vector<Tensor> gammas;  // one diagonal [N] per scale
};

struct ModelLayer {
  GatedTcnBlock tcn;
  MsSpatialBlock spatial;
  Tensor mix_weights;  // [F, S*F]; concat_linear aggregation only
  Tensor residual_weights;  // [F, F]
  Tensor skip_weights;      // [F, F]
};

// The stacked network: input lift, K gated-TCN + MS-spatial layers with
// residual/skip wiring, and the two-linear head read off the skip sum at the
// last time slot.
class Model {
public:
  ModelConfig cfg;
  Graph graph;
  std::vector<std::shared_ptr<const WaveletBasis>> bases;  // one per scale, shared by all layers

  Tensor lift_weights, lift_bias;      // [F, C], [F]
  std::vector<ModelLayer> layers;
  Tensor head1_weights, head1_bias;    // [F, F], [F]
  Tensor head2_weights, head2_bias;    // [T*C, F], [T*C]

  // Deterministic, name-ordered registry of every trainable tensor.
  std::vector<std::pair<std::string, Tensor>> parameters() const {
    std::vector<std::pair<std::string, Tensor>> ps;
    ps.push_back({"lift.weight", lift_weights});
    ps.push_back({"lift.bias", lift_bias});
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      ps.push_back({prefix + "filter.weight", layers[l].tcn.filter_weights});
      ps.push_back({prefix + "gate.weight", layers[l].tcn.gate_weights});
      for (std::size_t s = 0; s < layers[l].spatial.gammas.size(); ++s)
        ps.push_back({prefix + "gamma" + std::to_string(s), layers[l].spatial.gammas[s]});
      if (cfg.aggregation == Aggregation::concat_linear)
        ps.push_back({prefix + "mix.weight", layers[l].mix_weights});
      ps.push_back({prefix + "residual.weight", layers[l].residual_weights});
      ps.push_back({prefix + "skip.weight", layers[l].skip_weights});
    }
    ps.push_back({"head1.weight", head1_weights});
    ps.push_back({"head1.bias", head1_bias});
    ps.push_back({"head2.weight", head2_weights});
    ps.push_back({"head2.bias", head2_bias});
    return ps;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.numel();
    return n;
  }

  // x: [B, P, N, C] -> [B, T, N, C]. Training mode applies dropout from
  // `dropout_rng`; evaluation is deterministic.
  Tensor forward(Tape* tape, const Tensor& x, bool training = false,
                 Rng* dropout_rng = nullptr) const {
    const auto batch = expect_input_shape(x);
    const std::size_t n = static_cast<std::size_t>(graph.n);
    const std::size_t t_out = static_cast<std::size_t>(cfg.horizon);
    const std::size_t c = static_cast<std::size_t>(cfg.channels);

    Tensor skip;
    run_stack(tape, x, training, dropout_rng, &skip, /*crop=*/true);

    Tensor out = relu(tape, skip);                                   // [F,B,N]
    out = relu(tape, channel_map(tape, out, head1_weights, &head1_bias));
    out = channel_map(tape, out, head2_weights, &head2_bias);        // [T*C,B,N]
    out = reshape(tape, out, {t_out, c, batch, n});
    return permute(tape, out, {2, 0, 3, 1});                         // [B,T,N,C]
  }

  // Residual-path features after all K layers, full temporal length
  // [F,B,P,N]; position p only ever reads inputs at <= p.
  Tensor forward_stack(Tape* tape, const Tensor& x, bool training = false,
                       Rng* dropout_rng = nullptr) const {
    expect_input_shape(x);
    return run_stack(tape, x, training, dropout_rng, nullptr, /*crop=*/false);
  }

private:
  // With crop on, each layer keeps only the temporal suffix the final output
  // slot can see; the padded convolution contaminates exactly the d*(W-1)
  // earliest positions of a cropped block and the next crop drops exactly
  // those, so retained values match the full-length computation.
  Tensor run_stack(Tape* tape, const Tensor& x, bool training, Rng* dropout_rng,
                   Tensor* skip_out, bool crop) const {
    if (training && cfg.dropout_p > 0.0 && dropout_rng == nullptr)
      throw ConfigError("forward: training mode with dropout needs an rng");

    const std::size_t n_layers = layers.size();
    std::vector<std::size_t> needed(n_layers + 1, 0);
    needed[n_layers] = 1;
    for (std::size_t k = n_layers; k-- > 0;)
      needed[k] = needed[k + 1] + static_cast<std::size_t>(layers[k].tcn.dilation) *
                                      static_cast<std::size_t>(cfg.temporal_kernel_width - 1);

    Tensor h = permute(tape, x, {3, 0, 1, 2});  // [C,B,P,N]
    h = channel_map(tape, h, lift_weights, &lift_bias);  // [F,B,P,N]

    Tensor skip;
    bool have_skip = false;
    for (std::size_t li = 0; li < n_layers; ++li) {
      const ModelLayer& layer = layers[li];
      const auto d = static_cast<std::size_t>(layer.tcn.dilation);
      if (crop) h = crop_time_suffix(tape, h, needed[li]);
      Tensor filt = tanh(tape, tcn_conv(tape, h, layer.tcn.filter_weights, d));
      Tensor gate = sigmoid(tape, tcn_conv(tape, h, layer.tcn.gate_weights, d));
      Tensor u = mul(tape, filt, gate);

      Tensor mixed;
      if (cfg.aggregation == Aggregation::sum) {
        mixed = wavelet_mix(tape, u, bases, layer.spatial.gammas);
      } else {
        std::vector<Tensor> per_scale;
        for (std::size_t s = 0; s < bases.size(); ++s)
          per_scale.push_back(wavelet_mix(tape, u, {bases[s]}, {layer.spatial.gammas[s]}));
        mixed = channel_map(tape, concat_channels(tape, per_scale), layer.mix_weights);
      }
      Tensor v = relu(tape, mixed);
      if (training && cfg.dropout_p > 0.0) v = dropout(tape, v, cfg.dropout_p, true, *dropout_rng);

      if (skip_out) {
        // skip_map commutes with taking the last time slot, so the cheap
        // order is slice first.
        Tensor skip_part = channel_map(tape, slice_last_time(tape, v), layer.skip_weights);
        skip = have_skip ? add(tape, skip, skip_part) : skip_part;
        have_skip = true;
      }

      h = add(tape, h, channel_map(tape, v, layer.residual_weights));
    }
    if (skip_out) *skip_out = skip;
    return h;
  }

  std::size_t expect_input_shape(const Tensor& x) const {
    if (x.shape().size() != 4) throw ShapeError("forward: expected input [B,P,N,C]");
    if (x.shape()[1] != static_cast<std::size_t>(cfg.history) ||
        x.shape()[2] != static_cast<std::size_t>(graph.n) ||
        x.shape()[3] != static_cast<std::size_t>(cfg.channels))
      throw ShapeError("forward: input " + shape_str(x.shape()) + " does not match P=" +
                       std::to_string(cfg.history) + " N=" + std::to_string(graph.n) +
                       " C=" + std::to_string(cfg.channels));
    return x.shape()[0];
  }
};

inline std::vector<std::shared_ptr<const WaveletBasis>> build_bases(const ModelConfig& cfg,
                                                                    const Graph& graph) {
  DenseMatrix l = laplacian(graph, cfg.laplacian_kind);
  const double lambda_max =
      cfg.laplacian_kind == LaplacianKind::symmetric_normalized ? 2.0 : gershgorin_bound(l);
  std::vector<std::shared_ptr<const WaveletBasis>> bases;
  for (double s : cfg.scales) {
    if (cfg.exact_basis)
      bases.push_back(std::make_shared<const WaveletBasis>(exact_wavelet(l, s)));
    else
      bases.push_back(std::make_shared<const WaveletBasis>(
          chebyshev_wavelet(l, s, cfg.chebyshev_order, lambda_max, cfg.sparsify_threshold)));
  }
  return bases;
}

inline Model new_model(const ModelConfig& cfg, const Graph& graph, std::uint64_t seed) {
  cfg.validate();
  if (graph.n < 1) throw ConfigError("new_model: empty graph");
  if (cfg.receptive_field() < cfg.history)
    std::cerr << "warning: receptive field " << cfg.receptive_field() << " < history "
              << cfg.history << "; the last output never sees the whole window\n";

  Model m;
  m.cfg = cfg;
  m.graph = graph;
  m.bases = build_bases(cfg, graph);

  Rng rng = Rng(seed).fork("init");
  const std::size_t f = static_cast<std::size_t>(cfg.hidden_channels);
  const std::size_t c = static_cast<std::size_t>(cfg.channels);
  const std::size_t n = static_cast<std::size_t>(graph.n);
  const std::size_t w = static_cast<std::size_t>(cfg.temporal_kernel_width);
  const std::size_t s_count = cfg.scales.size();
  const std::size_t out_dim = static_cast<std::size_t>(cfg.horizon) * c;

  auto uniform_init = [&rng](Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> d(shape_numel(shape));
    for (double& v : d) v = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(d), true);
  };

  m.lift_weights = uniform_init({f, c}, c);
  m.lift_bias = Tensor::zeros({f}, true);
  for (int l = 0; l < cfg.num_layers; ++l) {
    ModelLayer layer;
    layer.tcn.dilation = cfg.dilation_for_layer(l);
    layer.tcn.filter_weights = uniform_init({f, f, w}, f * w);
    layer.tcn.gate_weights = uniform_init({f, f, w}, f * w);
    for (std::size_t s = 0; s < s_count; ++s) {
      std::vector<double> g(n);
      for (double& v : g) v = 1.0 + rng.uniform(-0.01, 0.01);
      layer.spatial.gammas.push_back(Tensor::from_data({n}, std::move(g), true));
    }
    if (cfg.aggregation == Aggregation::concat_linear)
      layer.mix_weights = uniform_init({f, s_count * f}, s_count * f);
    layer.residual_weights = uniform_init({f, f}, f);
    layer.skip_weights = uniform_init({f, f}, f);
    m.layers.push_back(std::move(layer));
  }
  m.head1_weights = uniform_init({f, f}, f);
  m.head1_bias = Tensor::zeros({f}, true);
  m.head2_weights = uniform_init({out_dim, f}, f);
  m.head2_bias = Tensor::zeros({out_dim}, true);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoint format: 8-byte magic "MSGWTCN1", u64 LE header length, UTF-8
// JSON header (config, graph, parameter manifest), raw little-endian f64
// payload, trailing CRC-32 of everything prior.

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len, std::uint32_t seed = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = ~seed;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

inline void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void append_f64_le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  append_u64_le(out, bits);
}
inline std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline double read_f64_le(const unsigned char* p) {
  const std::uint64_t bits = read_u64_le(p);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'G', 'W', 'T', 'C', 'N', '1'};

inline void save_checkpoint(const Model& m, const std::string& path) {
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  const auto params = m.parameters();
  for (const auto& [name, t] : params) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * 8;
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : m.graph.directed_edges)
    edges.push_back({m.graph.node_ids[static_cast<std::size_t>(a)],
                     m.graph.node_ids[static_cast<std::size_t>(b)]});
  const nlohmann::json header{{"format", 1},
                              {"config", model_config_to_json(m.cfg)},
                              {"node_ids", m.graph.node_ids},
                              {"edges", edges},
                              {"params", manifest}};
  const std::string header_str = header.dump();

  std::string blob;
  blob.reserve(16 + header_str.size() + offset + 4);
  blob.append(kCheckpointMagic, 8);
  detail::append_u64_le(blob, header_str.size());
  blob += header_str;
  for (const auto& [name, t] : params)
    for (double v : t.value()) detail::append_f64_le(blob, v);
  detail::append_u32_le(blob, detail::crc32(reinterpret_cast<const unsigned char*>(blob.data()),
                                            blob.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out.good()) throw IoError("checkpoint write failed: " + path);
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 20) throw ChecksumMismatchError("checkpoint truncated: " + path);
  if (std::memcmp(blob.data(), kCheckpointMagic, 8) != 0)
    throw VersionMismatchError("checkpoint magic mismatch: " + path);

  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint32_t crc_le = static_cast<std::uint32_t>(bytes[blob.size() - 4]) |
                               (static_cast<std::uint32_t>(bytes[blob.size() - 3]) << 8) |
                               (static_cast<std::uint32_t>(bytes[blob.size() - 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[blob.size() - 1]) << 24);
  if (detail::crc32(bytes, blob.size() - 4) != crc_le)
    throw ChecksumMismatchError("checkpoint CRC mismatch: " + path);

  const std::uint64_t header_len = detail::read_u64_le(bytes + 8);
  if (16 + header_len + 4 > blob.size()) throw ChecksumMismatchError("checkpoint header overruns file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header parse error: ") + e.what());
  }
  if (header.value("format", 0) != 1)
    throw VersionMismatchError("unsupported checkpoint format version");

  ModelConfig cfg = model_config_from_json(header.at("config"));
  std::vector<std::pair<std::string, std::string>> edge_list;
  for (const auto& e : header.at("edges"))
    edge_list.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
  Graph graph = build_graph(edge_list);
  const auto node_ids = header.at("node_ids").get<std::vector<std::string>>();
  if (graph.node_ids != node_ids)
    throw ShapeError("checkpoint node ids do not match the stored edge list");

  Model m = new_model(cfg, graph, 0);
  auto params = m.parameters();
  const auto& manifest = header.at("params");
  if (manifest.size() != params.size())
    throw ShapeError("checkpoint manifest does not match the model parameter set");
  const std::size_t payload_start = 16 + header_len;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    auto& [name, t] = params[i];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("shape").get<Shape>() != t.shape())
      throw ShapeError("checkpoint parameter '" + name + "' has unexpected name/shape");
    const std::size_t off = payload_start + entry.at("offset").get<std::size_t>();
    if (off + t.numel() * 8 + 4 > blob.size()) throw ChecksumMismatchError("checkpoint payload overruns file");
    for (std::size_t k = 0; k < t.numel(); ++k)
      t.value()[k] = detail::read_f64_le(bytes + off + k * 8);
  }
  return m;
}

// Load and insist the checkpoint was trained on this exact node set.
inline Model load_checkpoint(const std::string& path, const Graph& expected) {
  Model m = load_checkpoint(path);
  if (m.graph.node_ids != expected.node_ids)
    throw ShapeError("checkpoint graph does not match the supplied graph (node ids differ)");
  return m;
}

}  // namespace msgw
