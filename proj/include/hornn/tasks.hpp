#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hornn/sequence.hpp"

namespace hornn {

enum class TaskKind {
  // Frame t encodes symbol s_t (i.i.d. uniform); the label is s_{t-L}, or 0
  // for t < L.
  DelayedRecall,
  // Noisy bit stream; the label is the parity of the last W bits.
  ParityWindow,
  // Hidden Markov chain over S states emitting Gaussian frames; the label is
  // the current state.
  MarkovFrames,
};

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::DelayedRecall;
  std::size_t lag = 20;          // DelayedRecall
  std::size_t classes = 4;       // DelayedRecall
  std::size_t window = 3;        // ParityWindow
  std::size_t states = 4;        // MarkovFrames
  std::size_t emission_dim = 8;  // MarkovFrames
  std::size_t length = 60;
  std::size_t count = 100;
  std::uint64_t seed = 1;
  double noise = 0.1;
  std::size_t utterances_per_segment = 10;

  void validate() const;
  std::size_t frame_dim() const;
  std::size_t num_classes() const;
};

// Frames are rounded to float precision so the FSQ1 round trip is exact.
std::vector<SequenceBatch> generate(const TaskSpec& task);

// Appends regression deltas over a +-2 frame window with edge frames
// replicated: d_t = sum_k k (x_{t+k} - x_{t-k}) / 10.
Matrix delta_expand(const Matrix& frames);

// Subtracts each utterance's per-dimension mean, then scales every dimension
// to unit variance pooled over the utterances sharing a segment id. A
// zero-variance dimension is left unscaled.
void normalize(std::span<SequenceBatch> batches);

// Pairs label y_t with frame x_{min(t + delay, T - 1)}.
SequenceBatch apply_delay(const SequenceBatch& batch, std::size_t delay);

}  // namespace hornn
