#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegadapt/align.hpp"
#include "eegadapt/net.hpp"
#include "eegadapt/trial.hpp"

namespace eegadapt {

enum class Mode { online, adaptive, offline };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct AdaptPolicy {
  Mode mode = Mode::adaptive;
  bool use_buffer = false;
  std::size_t warmup_trials = 10;  // buffer joins the statistics while |history| <= this
  std::size_t buffer_size = 40;
  bool use_soft_kmeans = false;
  double soft_kmeans_beta = 5.0;
  int soft_kmeans_iters = 10;
  std::optional<double> eps_align;  // alignment ridge; default 1e-10·trace/dim

  // Ablation switches.
  bool include_current_in_alignment = true;  // incoming trial is part of its own R̄
  bool buffer_in_alignment = true;           // false: buffer only enters the BN statistics
  bool online_self_align = false;            // online mode whitens each trial by itself

  void validate() const;
};

struct Prediction {
  std::size_t predicted_class = 0;
  std::vector<double> probs;
};

// Streaming classifier of one session. Holds references to the frozen network, which
// must outlive the session.
class SessionState {
 public:
  SessionState(const NetworkSpec& spec, const WeightStore& weights, AdaptPolicy policy,
               std::vector<Trial> buffer);

  // Classifies the incoming trial. Adaptive mode re-aligns and re-normalises the whole
  // session so far (plus the warm-up buffer while |history| <= warmup_trials) and
  // returns the row of the incoming trial. Online mode uses the calibration whitener
  // carried by the weights and the stored BN statistics.
  Prediction classify_next(const Trial& trial);

  const AdaptPolicy& policy() const { return policy_; }
  const std::vector<Trial>& history() const { return history_; }
  const std::vector<Trial>& buffer() const { return buffer_; }
  const std::vector<std::size_t>& predictions() const { return predictions_; }
  const std::vector<std::vector<double>>& prob_rows() const { return prob_rows_; }
  // Alignment statistics of the last adaptive step.
  const AlignmentState& align_state() const { return align_state_; }

 private:
  std::vector<double> classify_online(const Trial& trial);
  std::vector<double> classify_adaptive();

  const NetworkSpec* spec_;
  const WeightStore* weights_;
  AdaptPolicy policy_;
  std::vector<Trial> buffer_;
  std::vector<Trial> history_;
  AlignmentState align_state_;
  std::vector<std::size_t> predictions_;
  std::vector<std::vector<double>> prob_rows_;
};

SessionState start_session(const NetworkSpec& spec, const WeightStore& weights,
                           const AdaptPolicy& policy, std::vector<Trial> buffer_trials);

// Aligns the whole set at once, one batch-statistics forward pass, argmax per row.
std::vector<Prediction> classify_offline(const NetworkSpec& spec, const WeightStore& weights,
                                         std::span<const Trial> trials, const AdaptPolicy& policy);

// Soft k-means on probability rows with centroids starting at the simplex vertices.
// Centroid k keeps the identity of class k; each row is decided by its nearest final
// centroid (lowest index on ties).
std::vector<std::size_t> soft_kmeans_decide(std::span<const std::vector<double>> rows,
                                            double beta, int iters);

}  // namespace eegadapt
