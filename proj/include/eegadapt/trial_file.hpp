#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegadapt/trial.hpp"

namespace eegadapt {

// Trial file: "EEGT", u32 version, u32 header length, UTF-8 JSON header, then
// n_trials i32 labels (-1 = unlabeled), then samples as little-endian f32 in
// [trial][channel][time] order. The byte length must match the header exactly.
inline constexpr std::uint32_t kTrialFileVersion = 1;

struct Preprocessing {
  std::optional<double> highpass_hz;
  std::optional<double> resampled_from_hz;
  friend bool operator==(const Preprocessing&, const Preprocessing&) = default;
};

struct TrialFileHeader {
  int subject_id = 0;
  int session_id = 0;
  std::size_t channels = 0;
  std::size_t samples = 0;
  double fs = 0.0;
  int num_classes = 0;
  std::size_t n_trials = 0;
  Preprocessing preprocessing;
};

struct LoadedSession {
  TrialFileHeader header;
  Session session;
};

std::vector<std::uint8_t> encode_trial_file(const Session& session,
                                            const Preprocessing& prep = {});
LoadedSession decode_trial_file(std::span<const std::uint8_t> bytes);

void save_trial_file(const std::filesystem::path& path, const Session& session,
                     const Preprocessing& prep = {});
LoadedSession load_trial_file(const std::filesystem::path& path);

// JSON text of the header, as printed by `inspect`.
std::string header_to_json(const TrialFileHeader& h);

}  // namespace eegadapt
