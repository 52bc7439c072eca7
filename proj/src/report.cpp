#include <cstdio>

#include "eegadapt/harness.hpp"

namespace eegadapt {

nlohmann::json policy_to_json(const AdaptPolicy& p) {
  nlohmann::json j;
  j["mode"] = to_string(p.mode);
  j["use_buffer"] = p.use_buffer;
  j["warmup_trials"] = p.warmup_trials;
  j["buffer_size"] = p.buffer_size;
  j["use_soft_kmeans"] = p.use_soft_kmeans;
  j["soft_kmeans_beta"] = p.soft_kmeans_beta;
  j["soft_kmeans_iters"] = p.soft_kmeans_iters;
  j["eps_align"] = p.eps_align ? nlohmann::json(*p.eps_align) : nlohmann::json("default");
  j["include_current_in_alignment"] = p.include_current_in_alignment;
  j["buffer_in_alignment"] = p.buffer_in_alignment;
  j["online_self_align"] = p.online_self_align;
  return j;
}

nlohmann::json report_to_json(const ReplayReport& r) {
  nlohmann::json j;
  nlohmann::json summary;
  summary["subject_id"] = r.subject_id;
  summary["session_id"] = r.session_id;
  summary["n_trials"] = r.trials.size();
  summary["final_accuracy"] = r.final_accuracy;
  summary["mode"] = to_string(r.policy.mode);
  summary["policy"] = policy_to_json(r.policy);
  summary["shuffle"] = r.shuffle;
  summary["seed"] = r.seed;
  if (r.wall_time_s) summary["wall_time_s"] = *r.wall_time_s;
  j["summary"] = summary;
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"position", t.position},
                      {"index", t.trial_index},
                      {"true_label", t.true_label},
                      {"predicted_label", t.predicted},
                      {"correct", t.correct}});
  }
  j["trials"] = trials;
  j["cumulative_accuracy"] = r.cumulative_accuracy;
  return j;
}

std::string curve_csv(std::span<const double> curve) {
  std::string out = "trial_index,cumulative_accuracy\n";
  char line[64];
  for (std::size_t t = 0; t < curve.size(); ++t) {
    std::snprintf(line, sizeof line, "%zu,%.17g\n", t, curve[t]);
    out += line;
  }
  return out;
}

}  // namespace eegadapt
