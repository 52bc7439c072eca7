#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "eegadapt/linalg.hpp"
#include "eegadapt/trial.hpp"

namespace eegadapt {

// Running Euclidean-alignment statistics of one session: the trial count, the sum of
// trial Gram matrices and a cached inverse square root of their mean.
class AlignmentState {
 public:
  AlignmentState() = default;

  // The first trial fixes the channel count.
  void accumulate(const Trial& trial);
  void accumulate(const Matrix& data);

  // Applies mean_covariance()^{-1/2}. Recomputes the whitener only when trials were
  // added since the last call (or a different ridge is requested).
  Trial whiten(const Trial& trial, std::optional<double> eps = std::nullopt);
  Matrix whiten(const Matrix& data, std::optional<double> eps = std::nullopt);

  const SymMatrix& whitener(std::optional<double> eps = std::nullopt);

  std::size_t count() const { return n_; }
  std::size_t dim() const { return cov_sum_.dim(); }
  bool empty() const { return n_ == 0; }
  bool dirty() const { return dirty_; }
  const SymMatrix& cov_sum() const { return cov_sum_; }
  SymMatrix mean_covariance() const;

  void reset();

 private:
  std::size_t n_ = 0;
  SymMatrix cov_sum_;
  std::optional<SymMatrix> whitener_;
  std::optional<double> whitener_eps_;
  bool dirty_ = true;
};

// Streaming alignment of an arriving trial. With `include_incoming` the trial joins
// the statistics before it is whitened; otherwise it is whitened with the previous
// trials only (or with itself when it is the first one) and accumulated afterwards.
Trial align_incoming(AlignmentState& state, const Trial& trial, bool include_incoming = true,
                     std::optional<double> eps = std::nullopt);

// Offline alignment: one state over the whole set, every trial whitened with it.
std::vector<Trial> align_batch(std::span<const Trial> trials,
                               std::optional<double> eps = std::nullopt);

}  // namespace eegadapt
