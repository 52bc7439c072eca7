#include "eegadapt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "eegadapt/align.hpp"

namespace eegadapt {

SubjectSplit split_cross_subject(const Dataset& dataset, int held_out_subject) {
  SubjectSplit out;
  for (const auto& s : dataset) (s.subject_id == held_out_subject ? out.eval : out.train).push_back(s);
  if (out.eval.empty())
    throw InvalidArgument("split_cross_subject: unknown subject " + std::to_string(held_out_subject));
  return out;
}

FineTuneSplit split_fine_tuning(Dataset subject_sessions, DatasetKind kind,
                                std::optional<SessionCounts> counts) {
  std::set<int> subjects;
  for (const auto& s : subject_sessions) subjects.insert(s.subject_id);
  if (subjects.size() > 1) throw InvalidArgument("split_fine_tuning: sessions of several subjects");

  SessionCounts want = counts.value_or(kind == DatasetKind::bnci_like ? SessionCounts{1, 1}
                                                                      : SessionCounts{2, 3});
  if (want.calibration < 1 || want.test < 1)
    throw InvalidArgument("split_fine_tuning: need at least one calibration and one test session");
  if (subject_sessions.size() < want.calibration + want.test) {
    throw InvalidArgument("split_fine_tuning: " + std::to_string(subject_sessions.size()) +
                          " sessions, need " + std::to_string(want.calibration + want.test));
  }
  if (!counts && subject_sessions.size() != want.calibration + want.test) {
    throw InvalidArgument("split_fine_tuning: " + std::to_string(subject_sessions.size()) +
                          " sessions do not match the dataset kind");
  }
  std::stable_sort(subject_sessions.begin(), subject_sessions.end(),
                   [](const Session& a, const Session& b) { return a.session_id < b.session_id; });
  FineTuneSplit out;
  for (std::size_t i = 0; i < subject_sessions.size(); ++i) {
    if (i < want.calibration)
      out.calibration.push_back(std::move(subject_sessions[i]));
    else if (i < want.calibration + want.test)
      out.test.push_back(std::move(subject_sessions[i]));
  }
  return out;
}

TrainingSet aligned_training_set(std::span<const Session> sessions, std::optional<double> eps) {
  TrainingSet set;
  for (const auto& s : sessions) {
    if (s.trials.empty()) continue;
    for (auto& t : align_batch(s.trials, eps)) set.trials.push_back(std::move(t));
  }
  set.aligned = true;
  return set;
}

SymMatrix calibration_whitener(std::span<const Session> sessions, std::optional<double> eps) {
  AlignmentState state;
  for (const auto& s : sessions)
    for (const auto& t : s.trials) state.accumulate(t);
  return state.whitener(eps);
}

std::vector<Trial> draw_buffer(std::span<const Trial> pool, std::size_t count, std::uint64_t seed) {
  if (pool.size() < count) {
    throw InvalidArgument("buffer: pool holds " + std::to_string(pool.size()) + " trials, " +
                          std::to_string(count) + " requested");
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5bd1e995a5a5a5a5ULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Trial> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(pool[idx[i]]);
  return out;
}

std::vector<double> cumulative_accuracy(std::span<const TrialOutcome> outcomes) {
  std::vector<double> curve;
  curve.reserve(outcomes.size());
  std::size_t correct = 0;
  for (std::size_t t = 0; t < outcomes.size(); ++t) {
    if (outcomes[t].correct) ++correct;
    curve.push_back(static_cast<double>(correct) / static_cast<double>(t + 1));
  }
  return curve;
}

void validate_report(const ReplayReport& report) {
  if (report.cumulative_accuracy.size() != report.trials.size())
    throw Error("report: curve length differs from the number of trials");
  const auto expected = cumulative_accuracy(report.trials);
  for (std::size_t t = 0; t < expected.size(); ++t) {
    if (report.trials[t].correct != (report.trials[t].predicted == report.trials[t].true_label))
      throw Error("report: correct flag inconsistent at position " + std::to_string(t));
    if (expected[t] != report.cumulative_accuracy[t])
      throw Error("report: cumulative accuracy inconsistent at position " + std::to_string(t));
  }
  if (!report.trials.empty() && report.final_accuracy != report.cumulative_accuracy.back())
    throw Error("report: final accuracy differs from the last curve entry");
}

ReplayReport replay(const NetworkSpec& spec, const WeightStore& weights, const Session& session,
                    const AdaptPolicy& policy, const ReplayOptions& opts,
                    std::span<const Trial> buffer_pool) {
  const auto started = std::chrono::steady_clock::now();
  policy.validate();
  if (session.trials.empty()) throw InvalidArgument("replay: empty session");
  for (std::size_t i = 0; i < session.trials.size(); ++i)
    if (!session.trials[i].label)
      throw InvalidArgument("replay: trial " + std::to_string(i) + " is unlabeled");

  std::vector<std::size_t> order(session.trials.size());
  std::iota(order.begin(), order.end(), 0);
  if (opts.shuffle) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Trial> fed;
  fed.reserve(order.size());
  for (std::size_t i : order) fed.push_back(session.trials[i]);

  ReplayReport rep;
  rep.subject_id = session.subject_id;
  rep.session_id = session.session_id;
  rep.policy = policy;
  rep.shuffle = opts.shuffle;
  rep.seed = opts.seed;

  std::vector<std::size_t> predicted(fed.size());
  if (policy.mode == Mode::offline) {
    try {
      const auto preds = classify_offline(spec, weights, fed, policy);
      for (std::size_t i = 0; i < preds.size(); ++i) predicted[i] = preds[i].predicted_class;
    } catch (const Error& e) {
      throw ReplayError(0, e.what());
    }
  } else {
    std::vector<Trial> buffer;
    if (policy.use_buffer) buffer = draw_buffer(buffer_pool, policy.buffer_size, opts.seed);
    SessionState state = start_session(spec, weights, policy, std::move(buffer));
    for (std::size_t i = 0; i < fed.size(); ++i) {
      try {
        predicted[i] = state.classify_next(fed[i]).predicted_class;
      } catch (const Error& e) {
        throw ReplayError(i, e.what());
      }
    }
  }

  for (std::size_t i = 0; i < fed.size(); ++i) {
    TrialOutcome o;
    o.position = i;
    o.trial_index = fed[i].index_in_session;
    o.true_label = *fed[i].label;
    o.predicted = static_cast<int>(predicted[i]);
    o.correct = o.predicted == o.true_label;
    rep.trials.push_back(o);
  }
  rep.cumulative_accuracy = cumulative_accuracy(rep.trials);
  rep.final_accuracy = rep.cumulative_accuracy.back();
  if (opts.timing) {
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  validate_report(rep);
  return rep;
}

std::vector<double> mean_curve(std::span<const ReplayReport> reports) {
  std::vector<double> sum;
  std::vector<std::size_t> n;
  for (const auto& r : reports) {
    if (r.cumulative_accuracy.size() > sum.size()) {
      sum.resize(r.cumulative_accuracy.size(), 0.0);
      n.resize(r.cumulative_accuracy.size(), 0);
    }
    for (std::size_t t = 0; t < r.cumulative_accuracy.size(); ++t) {
      sum[t] += r.cumulative_accuracy[t];
      ++n[t];
    }
  }
  for (std::size_t t = 0; t < sum.size(); ++t) sum[t] /= static_cast<double>(n[t]);
  return sum;
}

}  // namespace eegadapt
