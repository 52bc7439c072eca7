#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eegadapt/adapt.hpp"
#include "eegadapt/error.hpp"
#include "eegadapt/train.hpp"
#include "eegadapt/trial.hpp"

namespace eegadapt {

using Dataset = std::vector<Session>;

struct SubjectSplit {
  Dataset train;
  Dataset eval;
};

// Leave-one-subject-out: every session of `held_out_subject` goes to eval.
SubjectSplit split_cross_subject(const Dataset& dataset, int held_out_subject);

enum class DatasetKind { bnci_like, large_like };

struct SessionCounts {
  std::size_t calibration = 0;
  std::size_t test = 0;
};

struct FineTuneSplit {
  Dataset calibration;
  Dataset test;
};

// Chronological split of one subject's sessions: BNCI-like 1 + 1, Large-like 2 + 3,
// or an explicit count override.
FineTuneSplit split_fine_tuning(Dataset subject_sessions, DatasetKind kind,
                                std::optional<SessionCounts> counts = std::nullopt);

// Euclidean-aligns every session on its own and pools the labelled trials.
TrainingSet aligned_training_set(std::span<const Session> sessions,
                                 std::optional<double> eps = std::nullopt);

// R̄^{-1/2} over every trial of the given sessions.
SymMatrix calibration_whitener(std::span<const Session> sessions,
                               std::optional<double> eps = std::nullopt);

// Draws `count` distinct trials from `pool`.
std::vector<Trial> draw_buffer(std::span<const Trial> pool, std::size_t count, std::uint64_t seed);

struct TrialOutcome {
  std::size_t position = 0;  // replay order
  int trial_index = 0;       // index_in_session
  int true_label = 0;
  int predicted = 0;
  bool correct = false;
};

struct ReplayReport {
  int subject_id = 0;
  int session_id = 0;
  AdaptPolicy policy;
  bool shuffle = false;
  std::uint64_t seed = 0;
  std::vector<TrialOutcome> trials;
  std::vector<double> cumulative_accuracy;
  double final_accuracy = 0.0;
  std::optional<double> wall_time_s;  // only filled when timing is requested
};

// cumulative[t] = (number correct in 0..t) / (t+1).
std::vector<double> cumulative_accuracy(std::span<const TrialOutcome> outcomes);

// Throws Error if the curve cannot be recomputed from the per-trial flags.
void validate_report(const ReplayReport& report);

class ReplayError : public Error {
 public:
  ReplayError(std::size_t position, const std::string& what)
      : Error("replay failed at trial " + std::to_string(position) + ": " + what),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

struct ReplayOptions {
  bool shuffle = false;
  std::uint64_t seed = 0;
  bool timing = false;
};

// Feeds a labelled session through the engine one trial at a time (or once, for
// offline mode) and scores it in replay order. With a buffer policy, the buffer is
// drawn from `buffer_pool` using the seed.
ReplayReport replay(const NetworkSpec& spec, const WeightStore& weights, const Session& session,
                    const AdaptPolicy& policy, const ReplayOptions& opts,
                    std::span<const Trial> buffer_pool = {});

// Pointwise mean over reports; position t averages the reports that reach t.
std::vector<double> mean_curve(std::span<const ReplayReport> reports);

nlohmann::json policy_to_json(const AdaptPolicy& p);
nlohmann::json report_to_json(const ReplayReport& r);
// "trial_index,cumulative_accuracy" header, one line per position.
std::string curve_csv(std::span<const double> curve);

}  // namespace eegadapt
