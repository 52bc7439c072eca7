#pragma once

#include <optional>
#include <vector>

#include "eegadapt/matrix.hpp"

namespace eegadapt {

// Raw Gram matrix X·X^T of a channels×time trial (not divided by the sample count).
SymMatrix trial_covariance(const Matrix& trial);

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k is the eigenvector of values[k]
};

// Cyclic Jacobi sweeps until the off-diagonal Frobenius norm drops below
// `rel_tol`·‖m‖_F. Throws NumericalFailure after `max_sweeps`.
EigenDecomposition sym_eig(const SymMatrix& m, double rel_tol = 1e-12, int max_sweeps = 100);

// 1e-10 · trace(m) / dim.
double default_ridge(const SymMatrix& m);

// W = V·diag((λ+eps)^{-1/2})·V^T. The decomposition runs in extended precision so that
// W·(m+eps·I)·W stays close to identity for condition numbers up to ~1e8.
// Without `eps` the default ridge is used.
SymMatrix inv_sqrt(const SymMatrix& m, std::optional<double> eps = std::nullopt);

}  // namespace eegadapt
