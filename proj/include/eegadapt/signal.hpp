#pragma once

#include <cstdint>
#include <vector>

#include "eegadapt/matrix.hpp"
#include "eegadapt/trial.hpp"

namespace eegadapt {

// Zero-phase 2nd-order Butterworth high-pass, applied forward then backward per channel.
// Edges are extended by odd reflection (3 × filter order samples) and the filter starts
// from its steady state for the first sample, so constant signals are rejected exactly.
Matrix highpass(const Matrix& data, double cutoff_hz, double fs);
Trial highpass(const Trial& trial, double cutoff_hz, double fs);

// Rational-rate resampling with a windowed-sinc anti-alias filter (cutoff 0.45·fs_out,
// about 64 taps per polyphase branch). Output length is floor(T·fs_out/fs_in).
// Equal rates return the input unchanged.
Matrix resample(const Matrix& data, double fs_in, double fs_out);
Trial resample(const Trial& trial, double fs_in, double fs_out);

// Synthetic motor-imagery-like data with subject-specific spatial mixing.
//
// For subject s: A_s = I + σ_A·G_s with G_s having i.i.d. N(0, 1/C) entries. Each session
// draws a gain g ∈ [1−drift, 1+drift]. A trial of class c is X = g·A_s·Z + noise, where
// the T columns of Z are i.i.d. N(0, S_c).
struct SynthConfig {
  int num_subjects = 10;
  int sessions_per_subject = 2;
  int trials_per_session = 60;
  int num_classes = 2;
  int channels = 8;
  int samples = 256;
  double fs = 128.0;
  // Empty means: identity with channels {2c, 2c+1} inflated by `class_inflation` for class c.
  std::vector<SymMatrix> class_source_covariances;
  double class_inflation = 4.0;
  double subject_mixing_scale = 0.4;
  double subject_gain_drift = 0.15;
  double noise_std = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<SymMatrix> source_covariances() const;
};

// Sessions ordered by subject then session, trials by index. Samples are f32-representable.
std::vector<Session> generate(const SynthConfig& cfg);

// The mixing matrix A_s used for `subject` (exposed for tests).
Matrix subject_mixing(const SynthConfig& cfg, int subject);
// The gain g used for a subject's session.
double session_gain(const SynthConfig& cfg, int subject, int session);

}  // namespace eegadapt
