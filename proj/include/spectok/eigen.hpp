#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "spectok/errors.hpp"
#include "spectok/graph.hpp"
#include "spectok/tensor.hpp"

namespace spectok {

/// Ascending eigenvalues with eigenvectors as the columns of a dim×dim tensor.
struct Spectrum {
  std::vector<double> eigenvalues;
  Tensor eigenvectors;

  std::size_t dim() const noexcept { return eigenvalues.size(); }
};

inline constexpr double kJacobiTolerance = 1e-12;

/// Cyclic Jacobi eigensolver. Sweeps until the largest off-diagonal magnitude
/// drops below `tol`, then sorts eigenpairs ascending (stable on ties).
inline Spectrum sym_eigh(const SymmetricMatrix& matrix, double tol = kJacobiTolerance) {
  const std::size_t n = matrix.dim();
  std::vector<double> a = matrix.data();
  for (double v : a) {
    if (!std::isfinite(v)) throw NumericError("sym_eigh: non-finite matrix entry");
  }
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a[p * n + q]));
    if (off < tol) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A ← Jᵀ A J with J the (p, q) rotation; kept exactly symmetric.
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] < a[j * n + j]; });
  Spectrum out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Tensor(Shape{n, n});
  for (std::size_t c = 0; c < n; ++c) {
    out.eigenvalues[c] = a[order[c] * n + order[c]];
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v[r * n + order[c]];
  }
  return out;
}

/// max_i ‖A vᵢ − λᵢ vᵢ‖∞.
inline double eigen_residual(const SymmetricMatrix& a, const Spectrum& s) {
  const std::size_t n = a.dim();
  double worst = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      double av = 0.0;
      for (std::size_t k = 0; k < n; ++k) av += a(r, k) * s.eigenvectors(k, c);
      worst = std::max(worst, std::abs(av - s.eigenvalues[c] * s.eigenvectors(r, c)));
    }
  }
  return worst;
}

/// ‖VᵀV − I‖∞ (max-entry norm).
inline double orthonormality_error(const Spectrum& s) {
  const std::size_t n = s.dim();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < n; ++k) dot += s.eigenvectors(k, i) * s.eigenvectors(k, j);
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

}  // namespace spectok
