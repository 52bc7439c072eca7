#include "eegadapt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "eegadapt/error.hpp"

namespace eegadapt {

SymMatrix trial_covariance(const Matrix& trial) {
  if (trial.rows() == 0 || trial.cols() == 0)
    throw InvalidArgument("trial_covariance: trial has a zero dimension");
  const std::size_t c = trial.rows();
  SymMatrix out(c);
  for (std::size_t i = 0; i < c; ++i) {
    auto xi = trial.row(i);
    for (std::size_t j = i; j < c; ++j) {
      auto xj = trial.row(j);
      double s = 0.0;
      for (std::size_t t = 0; t < xi.size(); ++t) s += xi[t] * xj[t];
      out.set(i, j, s);
    }
  }
  return out;
}

namespace {

template <class Real>
struct JacobiResult {
  std::vector<Real> values;
  std::vector<Real> vectors;  // n×n row-major, columns are eigenvectors
  Real off_norm;
  bool converged;
};

template <class Real>
Real off_diagonal_norm(const std::vector<Real>& a, std::size_t n) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += a[i * n + j] * a[i * n + j];
  return std::sqrt(s);
}

// Cyclic Jacobi. Rotations whose off-diagonal entry is negligible against both
// diagonal entries are replaced by zeroing that entry, so the loop can reach an
// exactly diagonal matrix.
template <class Real>
JacobiResult<Real> jacobi(std::vector<Real> a, std::size_t n, Real rel_tol, int max_sweeps) {
  std::vector<Real> v(n * n, Real(0));
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1;

  Real norm = 0;
  for (Real x : a) norm += x * x;
  norm = std::sqrt(norm);

  Real off = off_diagonal_norm(a, n);
  bool converged = off <= rel_tol * norm;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const Real apq = a[p * n + q];
        if (apq == 0) continue;
        const Real app = a[p * n + p];
        const Real aqq = a[q * n + q];
        const Real g = 100 * std::abs(apq);
        if (sweep > 3 && std::abs(app) + g == std::abs(app) && std::abs(aqq) + g == std::abs(aqq)) {
          a[p * n + q] = 0;
          a[q * n + p] = 0;
          continue;
        }
        const Real theta = (aqq - app) / (2 * apq);
        Real t = 1 / (std::abs(theta) + std::sqrt(theta * theta + 1));
        if (theta < 0) t = -t;
        const Real c = 1 / std::sqrt(t * t + 1);
        const Real s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const Real akp = a[k * n + p];
          const Real akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const Real apk = a[p * n + k];
          const Real aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + p] = app - t * apq;
        a[q * n + q] = aqq + t * apq;
        a[p * n + q] = 0;
        a[q * n + p] = 0;

        for (std::size_t k = 0; k < n; ++k) {
          const Real vkp = v[k * n + p];
          const Real vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
    off = off_diagonal_norm(a, n);
    converged = off <= rel_tol * norm;
  }

  // Sort ascending.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] < a[y * n + y]; });
  JacobiResult<Real> r;
  r.values.resize(n);
  r.vectors.resize(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    r.values[k] = a[order[k] * n + order[k]];
    for (std::size_t i = 0; i < n; ++i) r.vectors[i * n + k] = v[i * n + order[k]];
  }
  r.off_norm = off;
  r.converged = converged;
  return r;
}

}  // namespace

EigenDecomposition sym_eig(const SymMatrix& m, double rel_tol, int max_sweeps) {
  const std::size_t n = m.dim();
  if (n == 0) throw InvalidArgument("sym_eig: empty matrix");
  std::vector<double> a(m.matrix().values().begin(), m.matrix().values().end());
  for (double x : a)
    if (!std::isfinite(x)) throw InvalidArgument("sym_eig: non-finite entry");
  auto r = jacobi<double>(std::move(a), n, rel_tol, max_sweeps);
  if (!r.converged) {
    throw NumericalFailure("sym_eig: no convergence after " + std::to_string(max_sweeps) +
                               " sweeps (off-diagonal norm " + std::to_string(r.off_norm) + ")",
                           r.off_norm);
  }
  return {std::move(r.values), Matrix(n, n, std::move(r.vectors))};
}

double default_ridge(const SymMatrix& m) {
  return 1e-10 * m.trace() / static_cast<double>(m.dim());
}

SymMatrix inv_sqrt(const SymMatrix& m, std::optional<double> eps) {
  using Real = long double;
  const std::size_t n = m.dim();
  if (n == 0) throw InvalidArgument("inv_sqrt: empty matrix");
  const double ridge = eps.value_or(default_ridge(m));
  if (!(ridge >= 0.0)) throw InvalidArgument("inv_sqrt: ridge must be non-negative");

  std::vector<Real> a(n * n);
  for (std::size_t i = 0; i < n * n; ++i) {
    const double x = m.matrix().values()[i];
    if (!std::isfinite(x)) throw InvalidArgument("inv_sqrt: non-finite entry");
    a[i] = x;
  }
  constexpr int kMaxSweeps = 100;
  auto r = jacobi<Real>(std::move(a), n, Real(0), kMaxSweeps);
  if (!r.converged) {
    Real norm = 0;
    for (std::size_t i = 0; i < n * n; ++i) norm += Real(m.matrix().values()[i]) * m.matrix().values()[i];
    if (r.off_norm > Real(1e-12) * std::sqrt(norm)) {
      throw NumericalFailure("inv_sqrt: eigendecomposition did not converge",
                             static_cast<double>(r.off_norm));
    }
  }

  Real max_abs = 0;
  for (Real l : r.values) max_abs = std::max(max_abs, std::abs(l));
  if (r.values.front() < -Real(1e-9) * max_abs) {
    throw NotPositiveSemidefinite("inv_sqrt: matrix has eigenvalue " +
                                      std::to_string(static_cast<double>(r.values.front())),
                                  static_cast<double>(r.values.front()));
  }

  std::vector<Real> scale(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Real s = r.values[k] + Real(ridge);
    if (!(s > 0)) {
      throw NumericalFailure("inv_sqrt: matrix is singular; a positive ridge is required",
                             static_cast<double>(s));
    }
    scale[k] = 1 / std::sqrt(s);
  }

  SymMatrix w(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      Real s = 0;
      for (std::size_t k = 0; k < n; ++k)
        s += r.vectors[i * n + k] * scale[k] * r.vectors[j * n + k];
      w.set(i, j, static_cast<double>(s));
    }
  }
  return w;
}

}  // namespace eegadapt
