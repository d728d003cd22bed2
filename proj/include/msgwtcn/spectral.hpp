#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "msgwtcn/eigensolver.hpp"
#include "msgwtcn/error.hpp"
#include "msgwtcn/matrix.hpp"

namespace msgw {

enum class BasisMethod { exact, chebyshev };

// The transform pair (psi, psi_inv) at one diffusion scale. psi applies the
// inverse graph wavelet transform x = psi * x_hat; psi_inv is built from the
// sign-flipped heat kernel.
struct WaveletBasis {
  double scale = 0.0;
  DenseMatrix psi;
  DenseMatrix psi_inv;
  BasisMethod method = BasisMethod::exact;
  int chebyshev_order = 0;        // meaningful when method == chebyshev
  double sparsify_threshold = 0.0;
};

// g(s*lambda) = exp(-s*lambda), elementwise.
inline std::vector<double> heat_kernel(double s, const std::vector<double>& lambdas) {
  if (!std::isfinite(s)) throw NumericError("heat_kernel: non-finite scale");
  std::vector<double> out(lambdas.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!std::isfinite(lambdas[i])) throw NumericError("heat_kernel: non-finite eigenvalue");
    out[i] = std::exp(-s * lambdas[i]);
  }
  return out;
}

namespace detail {

inline DenseMatrix spectral_filter(const EigenSystem& es, const std::vector<double>& kernel) {
  const std::size_t n = es.eigenvalues.size();
  DenseMatrix scaled = es.eigenvectors;  // U * diag(kernel)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) scaled(i, k) *= kernel[k];
  return matmul(scaled, es.eigenvectors.transposed());
}

}  // namespace detail

// Psi_s = U exp(-s Lambda) U^T, Psi_s^-1 = U exp(+s Lambda) U^T.
inline WaveletBasis exact_wavelet(const DenseMatrix& laplacian, double scale) {
  if (!(scale >= 0.0)) throw ConfigError("exact_wavelet: scale must be >= 0");
  EigenSystem es = eig_sym(laplacian);
  WaveletBasis b;
  b.scale = scale;
  b.method = BasisMethod::exact;
  b.psi = detail::spectral_filter(es, heat_kernel(scale, es.eigenvalues));
  b.psi_inv = detail::spectral_filter(es, heat_kernel(-scale, es.eigenvalues));
  return b;
}

// Upper bound on the spectrum of a symmetric matrix via Gershgorin disks.
inline double gershgorin_bound(const DenseMatrix& m) {
  double bound = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double r = m(i, i);
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (j != i) r += std::abs(m(i, j));
    bound = std::max(bound, r);
  }
  return bound;
}

// Chebyshev expansion coefficients of h(lambda) = exp(-sign*s*lambda) on
// [0, lambda_max], via lambda = (lambda_max/2)(x+1) and the discrete cosine
// transform over M = max(k+1, 64) Chebyshev-Gauss nodes.
inline std::vector<double> chebyshev_coeffs(double s, double lambda_max, int k, int sign) {
  if (lambda_max <= 0.0) throw ConfigError("chebyshev_coeffs: lambda_max must be > 0");
  if (k < 0) throw ConfigError("chebyshev_coeffs: order must be >= 0");
  if (sign != 1 && sign != -1) throw ConfigError("chebyshev_coeffs: sign must be +1 or -1");
  const int m_nodes = std::max(k + 1, 64);
  const double pi = 3.14159265358979323846;
  std::vector<double> h(static_cast<std::size_t>(m_nodes));
  std::vector<double> theta(static_cast<std::size_t>(m_nodes));
  for (int m = 0; m < m_nodes; ++m) {
    theta[static_cast<std::size_t>(m)] = pi * (m + 0.5) / m_nodes;
    const double lambda = 0.5 * lambda_max * (std::cos(theta[static_cast<std::size_t>(m)]) + 1.0);
    h[static_cast<std::size_t>(m)] = std::exp(-static_cast<double>(sign) * s * lambda);
  }
  std::vector<double> c(static_cast<std::size_t>(k) + 1, 0.0);
  for (int j = 0; j <= k; ++j) {
    double acc = 0.0;
    for (int m = 0; m < m_nodes; ++m)
      acc += h[static_cast<std::size_t>(m)] * std::cos(j * theta[static_cast<std::size_t>(m)]);
    c[static_cast<std::size_t>(j)] = (j == 0 ? 1.0 : 2.0) * acc / m_nodes;
  }
  return c;
}

// Evaluate sum_j c_j T_j(x) by the three-term recurrence (scalar form, used by
// the approximation-error reports and tests).
inline double chebyshev_eval(const std::vector<double>& coeffs, double x) {
  if (coeffs.empty()) return 0.0;
  double acc = coeffs[0];
  if (coeffs.size() == 1) return acc;
  double t_prev = 1.0, t_cur = x;
  acc += coeffs[1] * t_cur;
  for (std::size_t j = 2; j < coeffs.size(); ++j) {
    const double t_next = 2.0 * x * t_cur - t_prev;
    acc += coeffs[j] * t_next;
    t_prev = t_cur;
    t_cur = t_next;
  }
  return acc;
}

struct SparsifyResult {
  DenseMatrix matrix;
  double density = 0.0;  // nonzeros / (rows*cols)
};

inline SparsifyResult sparsify(const DenseMatrix& m, double threshold) {
  if (threshold < 0.0) throw ConfigError("sparsify: threshold must be >= 0");
  SparsifyResult r;
  r.matrix = m;
  std::size_t nnz = 0;
  for (double& v : r.matrix.data()) {
    if (std::abs(v) < threshold) v = 0.0;
    if (v != 0.0) ++nnz;
  }
  r.density = m.data().empty() ? 0.0 : static_cast<double>(nnz) / static_cast<double>(m.data().size());
  return r;
}

namespace detail {

inline DenseMatrix chebyshev_matrix_sum(const DenseMatrix& l_scaled, const std::vector<double>& coeffs) {
  const std::size_t n = l_scaled.rows();
  DenseMatrix acc(n, n);
  DenseMatrix t_prev = DenseMatrix::identity(n);  // T_0
  for (std::size_t i = 0; i < n; ++i) acc(i, i) = coeffs[0];
  if (coeffs.size() == 1) return acc;
  DenseMatrix t_cur = l_scaled;  // T_1
  for (std::size_t i = 0; i < acc.data().size(); ++i) acc.data()[i] += coeffs[1] * t_cur.data()[i];
  for (std::size_t j = 2; j < coeffs.size(); ++j) {
    DenseMatrix t_next(n, n);
    t_next.map().noalias() = 2.0 * l_scaled.map() * t_cur.map();
    for (std::size_t i = 0; i < t_next.data().size(); ++i) t_next.data()[i] -= t_prev.data()[i];
    for (std::size_t i = 0; i < acc.data().size(); ++i) acc.data()[i] += coeffs[j] * t_next.data()[i];
    t_prev = std::move(t_cur);
    t_cur = std::move(t_next);
  }
  return acc;
}

}  // namespace detail

// Psi approx sum_j c_j T_j(L~) with L~ = (2/lambda_max) L - I; psi_inv from
// sign=-1 coefficients. lambda_max <= 0 means "derive from Gershgorin disks";
// pass 2 explicitly for the normalized Laplacian. Entries below
// sparsify_threshold are zeroed afterwards.
inline WaveletBasis chebyshev_wavelet(const DenseMatrix& laplacian, double scale, int order,
                                      double lambda_max = 0.0, double sparsify_threshold = 0.0) {
  if (!laplacian.square()) throw ShapeError("chebyshev_wavelet: laplacian not square");
  if (!(scale >= 0.0)) throw ConfigError("chebyshev_wavelet: scale must be >= 0");
  if (laplacian.asymmetry() > 1e-10)
    throw NotSymmetricError("chebyshev_wavelet: laplacian not symmetric within 1e-10");
  if (lambda_max <= 0.0) lambda_max = gershgorin_bound(laplacian);
  if (lambda_max <= 0.0) throw ConfigError("chebyshev_wavelet: spectrum bound must be > 0");

  const std::size_t n = laplacian.rows();
  DenseMatrix l_scaled = laplacian;
  for (double& v : l_scaled.data()) v *= 2.0 / lambda_max;
  for (std::size_t i = 0; i < n; ++i) l_scaled(i, i) -= 1.0;

  WaveletBasis b;
  b.scale = scale;
  b.method = BasisMethod::chebyshev;
  b.chebyshev_order = order;
  b.sparsify_threshold = sparsify_threshold;
  b.psi = detail::chebyshev_matrix_sum(l_scaled, chebyshev_coeffs(scale, lambda_max, order, +1));
  b.psi_inv = detail::chebyshev_matrix_sum(l_scaled, chebyshev_coeffs(scale, lambda_max, order, -1));
  if (sparsify_threshold > 0.0) {
    b.psi = sparsify(b.psi, sparsify_threshold).matrix;
    b.psi_inv = sparsify(b.psi_inv, sparsify_threshold).matrix;
  }
  return b;
}

// U diag(kernel) U^T x  (Eq. 3 form; retained as the Fourier-path oracle).
inline std::vector<double> graph_fourier_convolve(const std::vector<double>& x,
                                                  const std::vector<double>& kernel_diag,
                                                  const EigenSystem& es) {
  const std::size_t n = es.eigenvalues.size();
  if (x.size() != n || kernel_diag.size() != n)
    throw ShapeError("graph_fourier_convolve: dimension mismatch");
  std::vector<double> xhat(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += es.eigenvectors(i, k) * x[i];
    xhat[k] = kernel_diag[k] * acc;
  }
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += es.eigenvectors(i, k) * xhat[k];
    y[i] = acc;
  }
  return y;
}

// psi diag(gamma) psi_inv x  (Eq. 6 form).
inline std::vector<double> wavelet_convolve(const std::vector<double>& x,
                                            const std::vector<double>& gamma,
                                            const WaveletBasis& basis) {
  const std::size_t n = basis.psi.rows();
  if (x.size() != n || gamma.size() != n) throw ShapeError("wavelet_convolve: dimension mismatch");
  std::vector<double> xhat = matvec(basis.psi_inv, x);
  for (std::size_t i = 0; i < n; ++i) xhat[i] *= gamma[i];
  return matvec(basis.psi, xhat);
}

// Locality measure: sum_i |m_ii| / sum_ij |m_ij|.
inline double diagonal_mass_ratio(const DenseMatrix& m) {
  if (!m.square()) throw ShapeError("diagonal_mass_ratio: matrix not square");
  double diag = 0.0, total = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      total += std::abs(m(i, j));
      if (i == j) diag += std::abs(m(i, j));
    }
  return total == 0.0 ? 0.0 : diag / total;
}

}  // namespace msgw
