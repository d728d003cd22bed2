#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "msgwtcn/error.hpp"
#include "msgwtcn/rng.hpp"

namespace msgw {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + "]";
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad, or downstream of a tensor that does
};

// Value-semantics handle onto a shared node. Copies alias the same storage;
// ops produce fresh nodes.
class Tensor {
public:
  Tensor() : node_(std::make_shared<TensorNode>()) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value.assign(shape_numel(t.node_->shape), 0.0);
    t.node_->requires_grad = requires_grad;
    t.node_->needs_grad = requires_grad;
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("Tensor::from_data: " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    t.node_->needs_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v) { return from_data({1}, {v}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }

  double item() const {
    if (numel() != 1) throw ShapeError("Tensor::item: tensor is not scalar");
    return node_->value[0];
  }

  // Tensor is a shared handle; grad accumulation mutates the shared node, not
  // the handle, so these are const.
  void ensure_grad() const {
    if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::vector<double>& grad() const {
    ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad_ref() const { return node_->grad; }
  void zero_grad() const {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  TensorNode* node() const { return node_.get(); }

private:
  std::shared_ptr<TensorNode> node_;
};

// Ordered record of backward rules; inputs are always recorded before the ops
// consuming them, so one reverse sweep visits every node exactly once.
class Tape {
public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }
  void run_backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

private:
  std::vector<std::function<void()>> ops_;
};

namespace detail {

inline void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw NonFiniteError(std::string(op) + ": non-finite value in output");
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MMap = Eigen::Map<RowMajorMatrix>;
using CMMap = Eigen::Map<const RowMajorMatrix>;

inline MMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline CMMap as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return CMMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  const bool bias_broadcast =
      b.shape().size() == 1 && !a.shape().empty() && b.shape()[0] == a.shape().back() &&
      !detail::same_shape(a.shape(), b.shape());
  if (!detail::same_shape(a.shape(), b.shape()) && !bias_broadcast)
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " (only trailing-dimension bias broadcast is supported)");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  if (bias_broadcast) {
    const std::size_t w = b.numel();
    for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i % w];
  } else {
    for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i];
  }
  detail::check_finite("add", out.value());
  out.node()->needs_grad = a.needs_grad() || b.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, b, out, bias_broadcast]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      if (a.needs_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        if (bias_broadcast) {
          const std::size_t w = b.numel();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % w] += g[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
      }
    });
  }
  return out;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (!detail::same_shape(a.shape(), b.shape()))
    throw ShapeError("mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] * b.value()[i];
  detail::check_finite("mul", out.value());
  out.node()->needs_grad = a.needs_grad() || b.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      if (a.needs_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
      }
    });
  }
  return out;
}

namespace detail {

template <typename Fwd, typename Dfn>
inline Tensor unary_elementwise(Tape* tape, const Tensor& a, const char* name, Fwd f, Dfn df) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = f(a.value()[i]);
  check_finite(name, out.value());
  out.node()->needs_grad = a.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, out, df]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(a.value()[i], out.value()[i]);
    });
  }
  return out;
}

}  // namespace detail

inline Tensor tanh(Tape* tape, const Tensor& a) {
  return detail::unary_elementwise(
      tape, a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(Tape* tape, const Tensor& a) {
  return detail::unary_elementwise(
      tape, a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(Tape* tape, const Tensor& a) {
  return detail::unary_elementwise(
      tape, a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// Inverted dropout: kept values scaled by 1/(1-p) at train time; exact
// identity in evaluation mode (the input handle is returned unchanged).
inline Tensor dropout(Tape* tape, const Tensor& a, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<std::uint8_t>>(a.numel());
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const bool keep = rng.uniform01() >= p;
    (*mask)[i] = keep ? 1 : 0;
    out.value()[i] = keep ? a.value()[i] * keep_scale : 0.0;
  }
  detail::check_finite("dropout", out.value());
  out.node()->needs_grad = a.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, out, mask, keep_scale]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if ((*mask)[i]) ga[i] += g[i] * keep_scale;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra ops

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  detail::as_matrix(out.value(), m, n).noalias() =
      detail::as_matrix(a.value(), m, k) * detail::as_matrix(b.value(), k, n);
  detail::check_finite("matmul", out.value());
  out.node()->needs_grad = a.needs_grad() || b.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      auto g = detail::as_matrix(out.grad(), m, n);
      if (a.needs_grad())
        detail::as_matrix(a.grad(), m, k).noalias() +=
            g * detail::as_matrix(b.value(), k, n).transpose();
      if (b.needs_grad())
        detail::as_matrix(b.grad(), k, n).noalias() +=
            detail::as_matrix(a.value(), m, k).transpose() * g;
    });
  }
  return out;
}

// Row i of `a` scaled by diag[i]; the diagonal's gradient collects per-row
// sums of g * a.
inline Tensor scale_rows(Tape* tape, const Tensor& a, const Tensor& diag) {
  if (a.shape().size() != 2 || diag.shape().size() != 1 || diag.shape()[0] != a.shape()[0])
    throw ShapeError("scale_rows: need a [r,c] and diag [r], got " + shape_str(a.shape()) +
                     " and " + shape_str(diag.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.value()[i * c + j] = a.value()[i * c + j] * diag.value()[i];
  detail::check_finite("scale_rows", out.value());
  out.node()->needs_grad = a.needs_grad() || diag.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, diag, out, r, c]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      if (a.needs_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * diag.value()[i];
      }
      if (diag.needs_grad()) {
        auto& gd = diag.grad();
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * a.value()[i * c + j];
          gd[i] += acc;
        }
      }
    });
  }
  return out;
}

inline Tensor sum(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::scalar(std::accumulate(a.value().begin(), a.value().end(), 0.0));
  detail::check_finite("sum", out.value());
  out.node()->needs_grad = a.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad_ref()[0];
      auto& ga = a.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

inline Tensor mse_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
  if (!detail::same_shape(pred.shape(), target.shape()))
    throw ShapeError("mse_loss: shapes " + shape_str(pred.shape()) + " and " +
                     shape_str(target.shape()));
  const std::size_t n = pred.numel();
  if (n == 0) throw ShapeError("mse_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.value()[i] - target.value()[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  detail::check_finite("mse_loss", out.value());
  out.node()->needs_grad = pred.needs_grad() || target.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([pred, target, out, n]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad_ref()[0];
      const double scale = 2.0 * g / static_cast<double>(n);
      if (pred.needs_grad()) {
        auto& gp = pred.grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += scale * (pred.value()[i] - target.value()[i]);
      }
      if (target.needs_grad()) {
        auto& gt = target.grad();
        for (std::size_t i = 0; i < n; ++i) gt[i] -= scale * (pred.value()[i] - target.value()[i]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layout ops

namespace detail {

inline std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// dst[permuted index] = src[index]; with accumulate=true adds instead.
inline void permute_raw(const Shape& in_shape, const std::vector<std::size_t>& perm,
                        const std::vector<double>& src, std::vector<double>& dst, bool accumulate) {
  const std::size_t rank = in_shape.size();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
  const auto out_strides = contiguous_strides(out_shape);
  std::vector<std::size_t> out_stride_for_in_axis(rank);
  for (std::size_t i = 0; i < rank; ++i) out_stride_for_in_axis[perm[i]] = out_strides[i];

  std::vector<std::size_t> idx(rank, 0);
  const std::size_t total = src.size();
  std::size_t out_off = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    if (accumulate)
      dst[out_off] += src[flat];
    else
      dst[out_off] = src[flat];
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      out_off += out_stride_for_in_axis[ax];
      if (idx[ax] < in_shape[ax]) break;
      out_off -= out_stride_for_in_axis[ax] * in_shape[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace detail

inline Tensor permute(Tape* tape, const Tensor& a, const std::vector<std::size_t>& perm) {
  const std::size_t rank = a.shape().size();
  if (perm.size() != rank) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.shape()[perm[i]];
  Tensor out = Tensor::zeros(out_shape);
  detail::permute_raw(a.shape(), perm, a.value(), out.value(), false);
  out.node()->needs_grad = a.needs_grad();
  if (tape && out.needs_grad()) {
    Shape in_shape = a.shape();
    tape->record([a, out, in_shape, perm]() mutable {
      if (!out.has_grad()) return;
      // Scatter: walking the input index space writes grad contributions back
      // through the same offset map used forward.
      const std::size_t rank = in_shape.size();
      Shape out_shape(rank);
      for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
      const auto out_strides = detail::contiguous_strides(out_shape);
      std::vector<std::size_t> out_stride_for_in_axis(rank);
      for (std::size_t i = 0; i < rank; ++i) out_stride_for_in_axis[perm[i]] = out_strides[i];
      auto& ga = a.grad();
      const auto& g = out.grad_ref();
      std::vector<std::size_t> idx(rank, 0);
      std::size_t out_off = 0;
      for (std::size_t flat = 0; flat < ga.size(); ++flat) {
        ga[flat] += g[out_off];
        for (std::size_t ax = rank; ax-- > 0;) {
          ++idx[ax];
          out_off += out_stride_for_in_axis[ax];
          if (idx[ax] < in_shape[ax]) break;
          out_off -= out_stride_for_in_axis[ax] * in_shape[ax];
          idx[ax] = 0;
        }
      }
    });
  }
  return out;
}

inline Tensor reshape(Tape* tape, const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
  Tensor out = Tensor::from_data(std::move(new_shape), a.value());
  out.node()->needs_grad = a.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse sweep

// Seeds d(loss)/d(loss) = seed and replays the tape backwards. Grads
// accumulate additively across fan-out; leaves with requires_grad end up
// populated. `seed` other than 1 supports microbatch-weighted accumulation.
inline void backward(const Tensor& loss, Tape& tape, double seed = 1.0) {
  if (loss.numel() != 1) throw NonScalarLossError("backward: loss must be a scalar");
  Tensor l = loss;
  l.grad()[0] += seed;
  tape.run_backward();
}

// ---------------------------------------------------------------------------
// Finite-difference validation of every backward rule

// Central differences over sampled coordinates; returns the max relative
// error |analytic - numeric| / max(1e-8, |analytic| + |numeric|). `f` must be
// deterministic (dropout off or with a fixed mask).
inline double grad_check(const std::function<Tensor(Tape*)>& f, const std::vector<Tensor>& params,
                         double eps = 1e-5, std::size_t coords_per_tensor = 200,
                         std::uint64_t seed = 0x9d5ec7a11ULL) {
  Tape tape;
  Tensor loss = f(&tape);
  for (const Tensor& p : params) {
    Tensor t = p;
    t.zero_grad();
  }
  backward(loss, tape, 1.0);

  double max_rel = 0.0;
  Rng rng(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(coords_per_tensor);
    }
    const std::vector<double> analytic = p.grad_ref();
    for (std::size_t c : coords) {
      const double saved = p.value()[c];
      p.value()[c] = saved + eps;
      const double lp = f(nullptr).item();
      p.value()[c] = saved - eps;
      const double lm = f(nullptr).item();
      p.value()[c] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[c];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace msgw
