#pragma once

// Generators and brute-force oracles shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include "eegadapt/matrix.hpp"
#include "eegadapt/net.hpp"
#include "eegadapt/trial.hpp"

namespace testing {

using eegadapt::Matrix;
using eegadapt::SymMatrix;
using eegadapt::Trial;

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Textbook triple loop, kept apart from the library's product.
inline Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Matrix naive_gram(const Matrix& x) { return naive_product(x, x.transposed()); }

// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
inline Matrix random_orthogonal(std::mt19937_64& rng, std::size_t n) {
  Matrix q = random_matrix(rng, n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t k = 0; k < j; ++k) {
        double d = 0;
        for (std::size_t i = 0; i < n; ++i) d += q(i, j) * q(i, k);
        for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
      }
    double norm = 0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

// Q·diag(λ)·Q^T with log-uniform spectrum between 1 and `cond` (times `scale`).
inline SymMatrix random_spd(std::mt19937_64& rng, std::size_t n, double cond, double scale = 1.0) {
  const Matrix q = random_orthogonal(rng, n);
  std::vector<double> lambda(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    lambda[i] = scale * std::pow(cond, u);
  }
  std::shuffle(lambda.begin(), lambda.end(), rng);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += static_cast<long double>(q(i, k)) * lambda[k] * q(j, k);
      m(i, j) = static_cast<double>(s);
    }
  return SymMatrix::from_matrix(m, 1e-9);
}

inline SymMatrix random_symmetric(std::mt19937_64& rng, std::size_t n) {
  Matrix a = random_matrix(rng, n, n);
  return SymMatrix::from_matrix(0.5 * (a + a.transposed()));
}

// ‖A·B·A − I‖_F evaluated in extended precision.
inline double sandwich_identity_error(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows();
  std::vector<long double> ab(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        ab[i * n + j] += static_cast<long double>(a(i, k)) * b(k, j);
  long double err = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += ab[i * n + k] * a(k, j);
      const long double d = s - (i == j ? 1.0L : 0.0L);
      err += d * d;
    }
  return static_cast<double>(std::sqrt(err));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline double identity_distance(const Matrix& m) {
  return eegadapt::frobenius_norm(m - Matrix::identity(m.rows()));
}

// Mean of X X^T over a set, computed with the naive product.
inline Matrix naive_mean_covariance(const std::vector<Trial>& trials) {
  const std::size_t c = trials.front().channels();
  Matrix sum(c, c);
  for (const auto& t : trials) sum = sum + naive_gram(t.data);
  return (1.0 / static_cast<double>(trials.size())) * sum;
}

inline std::vector<Trial> random_trials(std::mt19937_64& rng, std::size_t n, std::size_t c,
                                        std::size_t t, double scale = 1.0) {
  // A shared random mixing keeps the set away from isotropy.
  const Matrix mix =
      Matrix::identity(c) + random_matrix(rng, c, c, 0.4 / std::sqrt(static_cast<double>(c)));
  std::vector<Trial> out;
  for (std::size_t i = 0; i < n; ++i) {
    Trial tr;
    tr.data = scale * (mix * random_matrix(rng, c, t));
    tr.index_in_session = static_cast<int>(i);
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("eegadapt_test_" + name);
}

// Initialised weights with non-trivial BN parameters and running statistics.
inline eegadapt::WeightStore perturbed_weights(const eegadapt::NetworkSpec& spec,
                                               std::uint64_t seed) {
  eegadapt::WeightStore w = eegadapt::WeightStore::initialize(spec, seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (auto& b : w.blocks) {
    for (auto& v : b.conv_bias) v = nd(rng);
    for (auto& v : b.bn_gamma) v = 1.0 + nd(rng);
    for (auto& v : b.bn_beta) v = nd(rng);
    for (auto& v : b.bn_running_mean) v = nd(rng);
    for (auto& v : b.bn_running_var) v = 0.5 + std::abs(nd(rng));
  }
  for (auto& v : w.classifier_bias) v = nd(rng);
  w.round_to_f32();
  return w;
}

inline std::vector<Matrix> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t c,
                                        std::size_t t, double scale = 1.0) {
  std::vector<Matrix> b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(random_matrix(rng, c, t, scale));
  return b;
}

}  // namespace testing
