#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hornn/math.hpp"

namespace hornn {

// Frames excluded from the loss carry this label.
inline constexpr std::int32_t kNoLabel = -1;

struct SequenceBatch {
  Matrix frames;                     // T x D
  std::vector<std::int32_t> labels;  // T entries in [0, num_classes) or kNoLabel
  std::size_t num_classes = 0;
  std::string utterance_id;
  std::string segment_id;

  std::size_t length() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
  std::size_t labeled_frames() const;

  // Throws ConfigError when counts disagree or labels fall outside [0, C).
  void validate(bool allow_masked = false) const;

  bool operator==(const SequenceBatch&) const = default;
};

}  // namespace hornn
