#include "eegadapt/align.hpp"

#include <cmath>
#include <string>

#include "eegadapt/error.hpp"

namespace eegadapt {

void validate_trial(const Trial& t) {
  if (t.data.rows() == 0 || t.data.cols() == 0)
    throw InvalidArgument("trial has an empty dimension");
  for (double v : t.data.values())
    if (!std::isfinite(v)) throw InvalidArgument("trial contains a non-finite sample");
}

void AlignmentState::accumulate(const Trial& trial) { accumulate(trial.data); }

void AlignmentState::accumulate(const Matrix& data) {
  SymMatrix cov = trial_covariance(data);
  if (n_ == 0) {
    cov_sum_ = std::move(cov);
  } else {
    if (cov.dim() != cov_sum_.dim()) {
      throw InvalidArgument("accumulate: trial has " + std::to_string(cov.dim()) +
                            " channels, alignment state has " + std::to_string(cov_sum_.dim()));
    }
    cov_sum_ += cov;
  }
  ++n_;
  dirty_ = true;
}

SymMatrix AlignmentState::mean_covariance() const {
  if (n_ == 0) throw EmptyState("alignment state holds no trials");
  return (1.0 / static_cast<double>(n_)) * cov_sum_;
}

const SymMatrix& AlignmentState::whitener(std::optional<double> eps) {
  if (n_ == 0) throw EmptyState("cannot whiten with an empty alignment state");
  if (dirty_ || !whitener_ || whitener_eps_ != eps) {
    whitener_ = inv_sqrt(mean_covariance(), eps);
    whitener_eps_ = eps;
    dirty_ = false;
  }
  return *whitener_;
}

Matrix AlignmentState::whiten(const Matrix& data, std::optional<double> eps) {
  const SymMatrix& w = whitener(eps);
  if (data.rows() != w.dim()) {
    throw InvalidArgument("whiten: trial has " + std::to_string(data.rows()) +
                          " channels, alignment state has " + std::to_string(w.dim()));
  }
  return w.matrix() * data;
}

Trial AlignmentState::whiten(const Trial& trial, std::optional<double> eps) {
  Trial out = trial;
  out.data = whiten(trial.data, eps);
  return out;
}

void AlignmentState::reset() { *this = AlignmentState{}; }

Trial align_incoming(AlignmentState& state, const Trial& trial, bool include_incoming,
                     std::optional<double> eps) {
  if (include_incoming || state.empty()) {
    state.accumulate(trial);
    return state.whiten(trial, eps);
  }
  Trial out = state.whiten(trial, eps);
  state.accumulate(trial);
  return out;
}

std::vector<Trial> align_batch(std::span<const Trial> trials, std::optional<double> eps) {
  if (trials.empty()) throw InvalidArgument("align_batch: empty trial list");
  AlignmentState state;
  for (const auto& t : trials) state.accumulate(t);
  std::vector<Trial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(state.whiten(t, eps));
  return out;
}

}  // namespace eegadapt
