#pragma once

#include <optional>
#include <vector>

#include "eegadapt/matrix.hpp"

namespace eegadapt {

// One cue-aligned channels × time segment.
struct Trial {
  Matrix data;
  int subject_id = 0;
  int session_id = 0;
  int index_in_session = 0;
  std::optional<int> label;

  std::size_t channels() const { return data.rows(); }
  std::size_t samples() const { return data.cols(); }
};

// Throws InvalidArgument unless the trial is non-empty with finite entries.
void validate_trial(const Trial& t);

// A contiguous recording of one subject.
struct Session {
  int subject_id = 0;
  int session_id = 0;
  double fs = 0.0;
  int num_classes = 0;
  std::vector<Trial> trials;
};

}  // namespace eegadapt
