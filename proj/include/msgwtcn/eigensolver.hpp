#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "msgwtcn/error.hpp"
#include "msgwtcn/matrix.hpp"

namespace msgw {

struct EigenSystem {
  std::vector<double> eigenvalues;  // ascending
  DenseMatrix eigenvectors;         // orthonormal, columns
};

namespace detail {

inline double offdiag_frobenius(const DenseMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace detail

// Cyclic Jacobi rotations. Oracle-quality eigensolver for symmetric matrices;
// adequate up to N of a few thousand, which covers both paper networks.
inline EigenSystem eig_sym(const DenseMatrix& m) {
  if (!m.square()) throw NotSymmetricError("eig_sym: matrix not square");
  if (m.asymmetry() > 1e-10) throw NotSymmetricError("eig_sym: matrix not symmetric within 1e-10");
  const std::size_t n = m.rows();

  DenseMatrix a = m;
  DenseMatrix v = DenseMatrix::identity(n);
  const double tol = 1e-12 * m.frobenius_norm();

  bool converged = n < 2 || detail::offdiag_frobenius(a) <= tol;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = a(p, p), aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = a(r, p), arq = a(r, q);
            a(r, p) = arp - s * (arq + tau * arp);
            a(p, r) = a(r, p);
            a(r, q) = arq + s * (arp - tau * arq);
            a(q, r) = a(r, q);
          }
          const double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
    converged = detail::offdiag_frobenius(a) <= tol;
  }
  if (!converged) throw NoConvergenceError("eig_sym: no convergence within 100 sweeps");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  EigenSystem es;
  es.eigenvalues.resize(n);
  es.eigenvectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    es.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) es.eigenvectors(r, k) = v(r, order[k]);
  }
  return es;
}

}  // namespace msgw
