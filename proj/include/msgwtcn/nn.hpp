#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "msgwtcn/spectral.hpp"
#include "msgwtcn/tensor.hpp"

// Network-layer ops on the model's internal activation layout [C, B, P, N]
// (channels, batch, time, nodes; nodes innermost). With channels outermost the
// channel maps and the wavelet mixing each collapse into one dense product.

namespace msgw {

namespace detail {

using StridedConstMap =
    Eigen::Map<const RowMajorMatrix, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
using StridedMap = Eigen::Map<RowMajorMatrix, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

// View of the width-w slice [Co, Ci] of conv weights stored [Co, Ci, W].
inline StridedConstMap conv_tap(const std::vector<double>& f, std::size_t co, std::size_t ci,
                                std::size_t width, std::size_t w) {
  return StridedConstMap(f.data() + w, static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci),
                         Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(
                             static_cast<Eigen::Index>(ci * width), static_cast<Eigen::Index>(width)));
}

inline StridedMap conv_tap_mut(std::vector<double>& f, std::size_t co, std::size_t ci,
                               std::size_t width, std::size_t w) {
  return StridedMap(f.data() + w, static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci),
                    Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(
                        static_cast<Eigen::Index>(ci * width), static_cast<Eigen::Index>(width)));
}

}  // namespace detail

// y = W x (+ bias) across the leading channel axis; all trailing axes are
// flattened into columns.
inline Tensor channel_map(Tape* tape, const Tensor& x, const Tensor& weight,
                          const Tensor* bias = nullptr) {
  if (x.shape().empty() || weight.shape().size() != 2 || weight.shape()[1] != x.shape()[0])
    throw ShapeError("channel_map: weight " + shape_str(weight.shape()) + " does not map channels of " +
                     shape_str(x.shape()));
  const std::size_t ci = x.shape()[0];
  const std::size_t co = weight.shape()[0];
  const std::size_t m = x.numel() / ci;
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != co))
    throw ShapeError("channel_map: bias must be [out_channels]");

  Shape out_shape = x.shape();
  out_shape[0] = co;
  Tensor out = Tensor::zeros(out_shape);
  auto y = detail::as_matrix(out.value(), co, m);
  y.noalias() = detail::as_matrix(weight.value(), co, ci) * detail::as_matrix(x.value(), ci, m);
  if (bias)
    for (std::size_t o = 0; o < co; ++o) y.row(static_cast<Eigen::Index>(o)).array() += bias->value()[o];
  detail::check_finite("channel_map", out.value());

  out.node()->needs_grad = x.needs_grad() || weight.needs_grad() || (bias && bias->needs_grad());
  if (tape && out.needs_grad()) {
    Tensor b = bias ? *bias : Tensor();
    const bool has_bias = bias != nullptr;
    tape->record([x, weight, b, has_bias, out, ci, co, m]() mutable {
      if (!out.has_grad()) return;
      auto g = detail::as_matrix(out.grad(), co, m);
      if (x.needs_grad())
        detail::as_matrix(x.grad(), ci, m).noalias() +=
            detail::as_matrix(weight.value(), co, ci).transpose() * g;
      if (weight.needs_grad())
        detail::as_matrix(weight.grad(), co, ci).noalias() +=
            g * detail::as_matrix(x.value(), ci, m).transpose();
      if (has_bias && b.needs_grad()) {
        // fixed-order scalar sum: Eigen's vectorized reductions peel by
        // buffer alignment, which breaks bit-reproducibility across runs
        auto& gb = b.grad();
        const auto& gv = out.grad_ref();
        for (std::size_t o = 0; o < co; ++o) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += gv[o * m + j];
          gb[o] += acc;
        }
      }
    });
  }
  return out;
}

// Dilated causal convolution along the time axis of [Ci, B, P, N]; weights
// [Co, Ci, W] shared across nodes. Left zero-padding keeps the output length
// equal to the input length, so position p depends only on inputs at <= p.
inline Tensor tcn_conv(Tape* tape, const Tensor& x, const Tensor& f, std::size_t dilation) {
  if (x.shape().size() != 4 || f.shape().size() != 3 || f.shape()[1] != x.shape()[0])
    throw ShapeError("tcn_conv: need x [Ci,B,P,N] and f [Co,Ci,W], got " + shape_str(x.shape()) +
                     " and " + shape_str(f.shape()));
  if (dilation < 1) throw ConfigError("tcn_conv: dilation must be >= 1");
  const std::size_t ci = x.shape()[0], batch = x.shape()[1], plen = x.shape()[2], nodes = x.shape()[3];
  const std::size_t co = f.shape()[0], width = f.shape()[2];
  if (width < 1) throw ConfigError("tcn_conv: kernel width must be >= 1");

  Tensor out = Tensor::zeros({co, batch, plen, nodes});
  {
    auto xm = detail::as_matrix(x.value(), ci, batch * plen * nodes);
    auto ym = detail::as_matrix(out.value(), co, batch * plen * nodes);
    for (std::size_t w = 0; w < width; ++w) {
      const std::size_t shift = dilation * w;
      if (shift >= plen) break;
      const auto cols = static_cast<Eigen::Index>((plen - shift) * nodes);
      const auto fw = detail::conv_tap(f.value(), co, ci, width, w);
      for (std::size_t b = 0; b < batch; ++b) {
        const auto in_off = static_cast<Eigen::Index>(b * plen * nodes);
        const auto out_off = static_cast<Eigen::Index>(b * plen * nodes + shift * nodes);
        ym.block(0, out_off, static_cast<Eigen::Index>(co), cols).noalias() +=
            fw * xm.block(0, in_off, static_cast<Eigen::Index>(ci), cols);
      }
    }
  }
  detail::check_finite("tcn_conv", out.value());

  out.node()->needs_grad = x.needs_grad() || f.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([x, f, out, ci, co, batch, plen, nodes, width, dilation]() mutable {
      if (!out.has_grad()) return;
      auto gy = detail::as_matrix(out.grad(), co, batch * plen * nodes);
      for (std::size_t w = 0; w < width; ++w) {
        const std::size_t shift = dilation * w;
        if (shift >= plen) break;
        const auto cols = static_cast<Eigen::Index>((plen - shift) * nodes);
        for (std::size_t b = 0; b < batch; ++b) {
          const auto in_off = static_cast<Eigen::Index>(b * plen * nodes);
          const auto out_off = static_cast<Eigen::Index>(b * plen * nodes + shift * nodes);
          if (x.needs_grad()) {
            auto gx = detail::as_matrix(x.grad(), ci, batch * plen * nodes);
            const auto fw = detail::conv_tap(f.value(), co, ci, width, w);
            gx.block(0, in_off, static_cast<Eigen::Index>(ci), cols).noalias() +=
                fw.transpose() * gy.block(0, out_off, static_cast<Eigen::Index>(co), cols);
          }
          if (f.needs_grad()) {
            auto gf = detail::conv_tap_mut(f.grad(), co, ci, width, w);
            auto xm = detail::as_matrix(x.value(), ci, batch * plen * nodes);
            gf.noalias() += gy.block(0, out_off, static_cast<Eigen::Index>(co), cols) *
                            xm.block(0, in_off, static_cast<Eigen::Index>(ci), cols).transpose();
          }
        }
      }
    });
  }
  return out;
}

// Spec-facing layout [batch, channels, time]; thin view over tcn_conv.
inline Tensor dilated_causal_conv1d(Tape* tape, const Tensor& x, const Tensor& f,
                                    std::size_t dilation) {
  if (x.shape().size() != 3)
    throw ShapeError("dilated_causal_conv1d: expected x [batch, channels, time], got " +
                     shape_str(x.shape()));
  const std::size_t batch = x.shape()[0], t = x.shape()[2];
  Tensor xc = permute(tape, x, {1, 0, 2});                       // [Ci,B,T]
  xc = reshape(tape, xc, {xc.shape()[0], batch, t, 1});          // [Ci,B,T,1]
  Tensor y = tcn_conv(tape, xc, f, dilation);                    // [Co,B,T,1]
  y = reshape(tape, y, {y.shape()[0], batch, t});                // [Co,B,T]
  return permute(tape, y, {1, 0, 2});                           // [B,Co,T]
}

// Multi-scale wavelet mixing along the node axis (Eq. 7 with sum
// aggregation): y = (sum_s Psi_s diag(gamma_s) Psi_s^-1) x. The aggregated
// N x N operator is formed once per call, so the heavy cost is a single
// [M,N]x[N,N] product regardless of the number of scales.
inline Tensor wavelet_mix(Tape* tape, const Tensor& x,
                          const std::vector<std::shared_ptr<const WaveletBasis>>& bases,
                          const std::vector<Tensor>& gammas) {
  if (bases.empty() || bases.size() != gammas.size())
    throw ConfigError("wavelet_mix: need one gamma per basis, at least one scale");
  if (x.shape().empty()) throw ShapeError("wavelet_mix: empty tensor");
  const std::size_t nodes = x.shape().back();
  const std::size_t m = x.numel() / nodes;
  for (std::size_t s = 0; s < bases.size(); ++s) {
    if (bases[s]->psi.rows() != nodes || bases[s]->psi.cols() != nodes)
      throw ShapeError("wavelet_mix: basis dimension does not match node axis");
    if (gammas[s].shape().size() != 1 || gammas[s].shape()[0] != nodes)
      throw ShapeError("wavelet_mix: gamma must be [N]");
  }

  const auto n = static_cast<Eigen::Index>(nodes);
  auto w_agg = std::make_shared<detail::RowMajorMatrix>(detail::RowMajorMatrix::Zero(n, n));
  detail::RowMajorMatrix scaled(n, n);
  for (std::size_t s = 0; s < bases.size(); ++s) {
    scaled = bases[s]->psi.map();
    for (Eigen::Index k = 0; k < n; ++k)
      scaled.col(k) *= gammas[s].value()[static_cast<std::size_t>(k)];
    w_agg->noalias() += scaled * bases[s]->psi_inv.map();
  }

  Tensor out = Tensor::zeros(x.shape());
  detail::as_matrix(out.value(), m, nodes).noalias() =
      detail::as_matrix(x.value(), m, nodes) * w_agg->transpose();
  detail::check_finite("wavelet_mix", out.value());

  bool any_gamma_grad = false;
  for (const Tensor& g : gammas) any_gamma_grad = any_gamma_grad || g.needs_grad();
  out.node()->needs_grad = x.needs_grad() || any_gamma_grad;
  if (tape && out.needs_grad()) {
    std::vector<Tensor> gamma_copy = gammas;
    tape->record([x, out, bases, gamma_copy, w_agg, m, nodes]() mutable {
      if (!out.has_grad()) return;
      const auto n = static_cast<Eigen::Index>(nodes);
      auto gy = detail::as_matrix(out.grad(), m, nodes);
      if (x.needs_grad())
        detail::as_matrix(x.grad(), m, nodes).noalias() += gy * (*w_agg);
      bool any_gamma = false;
      for (const Tensor& g : gamma_copy) any_gamma = any_gamma || g.needs_grad();
      if (any_gamma) {
        detail::RowMajorMatrix dw(n, n);
        dw.noalias() = gy.transpose() * detail::as_matrix(x.value(), m, nodes);
        detail::RowMajorMatrix a(n, n);
        for (std::size_t s = 0; s < bases.size(); ++s) {
          if (!gamma_copy[s].needs_grad()) continue;
          a.noalias() = bases[s]->psi.map().transpose() * dw;
          auto& gg = gamma_copy[s].grad();
          const auto& inv = bases[s]->psi_inv;
          // fixed-order scalar dot for bit-reproducibility
          for (std::size_t k = 0; k < nodes; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < nodes; ++j)
              acc += a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * inv(k, j);
            gg[k] += acc;
          }
        }
      }
    });
  }
  return out;
}

// [C,B,P,N] -> [C,B,keep,N], retaining the last `keep` time slots. No-op
// (same handle) when keep >= P.
inline Tensor crop_time_suffix(Tape* tape, const Tensor& x, std::size_t keep) {
  if (x.shape().size() != 4) throw ShapeError("crop_time_suffix: expected rank-4 [C,B,P,N]");
  const std::size_t c = x.shape()[0], b = x.shape()[1], p = x.shape()[2], n = x.shape()[3];
  if (keep >= p) return x;
  if (keep == 0) throw ShapeError("crop_time_suffix: keep must be >= 1");
  const std::size_t drop = p - keep;
  Tensor out = Tensor::zeros({c, b, keep, n});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t bi = 0; bi < b; ++bi) {
      const double* src = x.value().data() + ((ci * b + bi) * p + drop) * n;
      double* dst = out.value().data() + (ci * b + bi) * keep * n;
      std::copy(src, src + keep * n, dst);
    }
  out.node()->needs_grad = x.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([x, out, c, b, p, n, keep, drop]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      auto& gx = x.grad();
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t bi = 0; bi < b; ++bi) {
          const double* src = g.data() + (ci * b + bi) * keep * n;
          double* dst = gx.data() + ((ci * b + bi) * p + drop) * n;
          for (std::size_t k = 0; k < keep * n; ++k) dst[k] += src[k];
        }
    });
  }
  return out;
}

// [C,B,P,N] -> [C,B,N] at the final time slot.
inline Tensor slice_last_time(Tape* tape, const Tensor& x) {
  if (x.shape().size() != 4) throw ShapeError("slice_last_time: expected rank-4 [C,B,P,N]");
  const std::size_t c = x.shape()[0], b = x.shape()[1], p = x.shape()[2], n = x.shape()[3];
  Tensor out = Tensor::zeros({c, b, n});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t bi = 0; bi < b; ++bi) {
      const double* src = x.value().data() + ((ci * b + bi) * p + (p - 1)) * n;
      double* dst = out.value().data() + (ci * b + bi) * n;
      std::copy(src, src + n, dst);
    }
  out.node()->needs_grad = x.needs_grad();
  if (tape && out.needs_grad()) {
    tape->record([x, out, c, b, p, n]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      auto& gx = x.grad();
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t bi = 0; bi < b; ++bi) {
          const double* src = g.data() + (ci * b + bi) * n;
          double* dst = gx.data() + ((ci * b + bi) * p + (p - 1)) * n;
          for (std::size_t k = 0; k < n; ++k) dst[k] += src[k];
        }
    });
  }
  return out;
}

// Concatenation along the channel (leading) axis; used by the concat+linear
// aggregation mode.
inline Tensor concat_channels(Tape* tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  Shape rest(xs[0].shape().begin() + 1, xs[0].shape().end());
  std::size_t total_c = 0;
  for (const Tensor& x : xs) {
    Shape r(x.shape().begin() + 1, x.shape().end());
    if (r != rest) throw ShapeError("concat_channels: trailing shapes differ");
    total_c += x.shape()[0];
  }
  Shape out_shape = xs[0].shape();
  out_shape[0] = total_c;
  Tensor out = Tensor::zeros(out_shape);
  std::size_t offset = 0;
  bool needs = false;
  for (const Tensor& x : xs) {
    std::copy(x.value().begin(), x.value().end(), out.value().begin() + static_cast<long>(offset));
    offset += x.numel();
    needs = needs || x.needs_grad();
  }
  out.node()->needs_grad = needs;
  if (tape && out.needs_grad()) {
    std::vector<Tensor> inputs = xs;
    tape->record([inputs, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad_ref();
      std::size_t offset = 0;
      for (Tensor& x : inputs) {
        if (x.needs_grad()) {
          auto& gx = x.grad();
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[offset + i];
        }
        offset += x.numel();
      }
    });
  }
  return out;
}

}  // namespace msgw
