#include "eegadapt/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eegadapt/error.hpp"

namespace eegadapt {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::online: return "online";
    case Mode::adaptive: return "adaptive";
    case Mode::offline: return "offline";
  }
  return "unknown";
}

Mode parse_mode(const std::string& s) {
  if (s == "online") return Mode::online;
  if (s == "adaptive") return Mode::adaptive;
  if (s == "offline") return Mode::offline;
  throw InvalidArgument("unknown mode '" + s + "' (expected online, adaptive or offline)");
}

void AdaptPolicy::validate() const {
  if (use_buffer && buffer_size == 0)
    throw InvalidArgument("policy: buffer_size must be > 0 when the buffer is enabled");
  if (use_soft_kmeans && !(soft_kmeans_beta > 0.0))
    throw InvalidArgument("policy: soft_kmeans_beta must be positive");
  if (soft_kmeans_iters < 0) throw InvalidArgument("policy: soft_kmeans_iters must be >= 0");
  if (eps_align && !(*eps_align >= 0.0)) throw InvalidArgument("policy: eps_align must be >= 0");
}

SessionState::SessionState(const NetworkSpec& spec, const WeightStore& weights,
                           AdaptPolicy policy, std::vector<Trial> buffer)
    : spec_(&spec), weights_(&weights), policy_(policy), buffer_(std::move(buffer)) {
  policy_.validate();
  if (policy_.use_buffer && buffer_.size() != policy_.buffer_size) {
    throw InvalidArgument("start_session: buffer holds " + std::to_string(buffer_.size()) +
                          " trials, policy expects " + std::to_string(policy_.buffer_size));
  }
  for (const auto& t : buffer_) {
    validate_trial(t);
    if (t.channels() != spec.in_channels) {
      throw InvalidArgument("start_session: buffer trial has " + std::to_string(t.channels()) +
                            " channels, network expects " + std::to_string(spec.in_channels));
    }
  }
}

std::vector<double> SessionState::classify_online(const Trial& trial) {
  Matrix aligned;
  if (policy_.online_self_align) {
    AlignmentState self;
    self.accumulate(trial);
    aligned = self.whiten(trial.data, policy_.eps_align);
  } else if (weights_->calibration_whitener) {
    aligned = weights_->calibration_whitener->matrix() * trial.data;
  } else {
    aligned = trial.data;
  }
  const ForwardResult r = forward(*spec_, *weights_, std::span(&aligned, 1), BnSelection::stored());
  auto row = r.probs.row(0);
  return {row.begin(), row.end()};
}

std::vector<double> SessionState::classify_adaptive() {
  const bool warm = policy_.use_buffer && history_.size() <= policy_.warmup_trials;
  std::vector<const Trial*> members;
  if (warm)
    for (const auto& t : buffer_) members.push_back(&t);
  for (const auto& t : history_) members.push_back(&t);

  // Statistics: everything in `members`, minus the buffer for BN-only buffering and
  // minus the incoming trial when it must not align itself (unless it is alone).
  align_state_.reset();
  const std::size_t first = warm && !policy_.buffer_in_alignment ? buffer_.size() : 0;
  std::size_t last = members.size();
  if (!policy_.include_current_in_alignment && last - first > 1) --last;
  for (std::size_t i = first; i < last; ++i) align_state_.accumulate(*members[i]);

  std::vector<Matrix> batch;
  batch.reserve(members.size());
  for (const Trial* t : members) batch.push_back(align_state_.whiten(t->data, policy_.eps_align));
  const ForwardResult r = forward(*spec_, *weights_, batch, BnSelection::batch());
  auto row = r.probs.row(members.size() - 1);
  return {row.begin(), row.end()};
}

Prediction SessionState::classify_next(const Trial& trial) {
  if (policy_.mode == Mode::offline)
    throw InvalidMode("classify_next: offline mode classifies whole sets (use classify_offline)");
  validate_trial(trial);
  if (trial.channels() != spec_->in_channels) {
    throw InvalidArgument("classify_next: trial has " + std::to_string(trial.channels()) +
                          " channels, network expects " + std::to_string(spec_->in_channels));
  }
  history_.push_back(trial);
  Prediction p;
  p.probs = policy_.mode == Mode::online ? classify_online(trial) : classify_adaptive();
  prob_rows_.push_back(p.probs);
  if (policy_.use_soft_kmeans) {
    p.predicted_class =
        soft_kmeans_decide(prob_rows_, policy_.soft_kmeans_beta, policy_.soft_kmeans_iters).back();
  } else {
    p.predicted_class = argmax(p.probs);
  }
  predictions_.push_back(p.predicted_class);
  return p;
}

SessionState start_session(const NetworkSpec& spec, const WeightStore& weights,
                           const AdaptPolicy& policy, std::vector<Trial> buffer_trials) {
  return SessionState(spec, weights, policy, std::move(buffer_trials));
}

std::vector<Prediction> classify_offline(const NetworkSpec& spec, const WeightStore& weights,
                                         std::span<const Trial> trials,
                                         const AdaptPolicy& policy) {
  policy.validate();
  if (trials.empty()) throw InvalidArgument("classify_offline: empty trial list");
  for (const auto& t : trials) validate_trial(t);
  const std::vector<Trial> aligned = align_batch(trials, policy.eps_align);
  std::vector<Matrix> batch;
  batch.reserve(aligned.size());
  for (const auto& t : aligned) batch.push_back(t.data);
  const ForwardResult r = forward(spec, weights, batch, BnSelection::batch());

  std::vector<Prediction> out(trials.size());
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto row = r.probs.row(i);
    out[i].probs.assign(row.begin(), row.end());
    out[i].predicted_class = argmax(row);
  }
  if (policy.use_soft_kmeans) {
    for (const auto& p : out) rows.push_back(p.probs);
    const auto decided = soft_kmeans_decide(rows, policy.soft_kmeans_beta, policy.soft_kmeans_iters);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].predicted_class = decided[i];
  }
  return out;
}

std::vector<std::size_t> soft_kmeans_decide(std::span<const std::vector<double>> rows,
                                            double beta, int iters) {
  if (rows.empty()) return {};
  if (!(beta > 0.0)) throw InvalidArgument("soft_kmeans_decide: beta must be positive");
  if (iters < 0) throw InvalidArgument("soft_kmeans_decide: iters must be >= 0");
  const std::size_t K = rows.front().size();
  if (K < 2) throw InvalidArgument("soft_kmeans_decide: need at least 2 classes");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != K)
      throw InvalidArgument("soft_kmeans_decide: row " + std::to_string(r) + " has the wrong length");
    double s = 0.0;
    for (double v : rows[r]) {
      if (!std::isfinite(v) || v < -1e-12)
        throw InvalidArgument("soft_kmeans_decide: row " + std::to_string(r) + " is off the simplex");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw InvalidArgument("soft_kmeans_decide: row " + std::to_string(r) + " sums to " +
                            std::to_string(s));
  }

  auto sqdist = [K](std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t k = 0; k < K; ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
    return d;
  };

  Matrix centroids = Matrix::identity(K);
  std::vector<double> logw(K);
  for (int it = 0; it < iters; ++it) {
    Matrix sums(K, K);
    std::vector<double> mass(K, 0.0);
    for (const auto& row : rows) {
      for (std::size_t k = 0; k < K; ++k) logw[k] = -beta * sqdist(row, centroids.row(k));
      const double m = *std::max_element(logw.begin(), logw.end());
      double z = 0.0;
      for (auto& v : logw) {
        v = std::exp(v - m);
        z += v;
      }
      for (std::size_t k = 0; k < K; ++k) {
        const double w = logw[k] / z;
        mass[k] += w;
        for (std::size_t j = 0; j < K; ++j) sums(k, j) += w * row[j];
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (mass[k] <= 0.0) continue;  // keep an empty centroid where it is
      for (std::size_t j = 0; j < K; ++j) centroids(k, j) = sums(k, j) / mass[k];
    }
  }

  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const double d = sqdist(row, centroids.row(k));
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace eegadapt
