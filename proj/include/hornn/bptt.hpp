#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hornn/model.hpp"
#include "hornn/sequence.hpp"

namespace hornn {

// Per-step caches of one recurrent layer over an unfolded window.
struct LayerTrace {
  std::vector<StepResult> steps;

  std::size_t length() const { return steps.size(); }
  // Layer output at step t (0-based): p_t for projected kinds, else h_t.
  std::span<const double> output(std::size_t t) const;
};

// Runs the layer left to right from zero initial states. History before the
// window start reads as zero.
LayerTrace forward_layer(const CellParams& params, std::span<const Vector> inputs);

struct HeadStep {
  bool evaluated = false;
  Vector hidden_a;
  Vector hidden;
  Vector logits;
  Vector probs;
};

struct UnfoldedStates {
  std::vector<Vector> frames;
  std::vector<LayerTrace> layers;
  std::vector<HeadStep> head;
  double loss = 0.0;  // summed cross-entropy over labeled frames
  std::size_t labeled = 0;
  std::size_t correct = 0;
};

std::vector<Vector> rows_as_vectors(const Matrix& frames);

// Forward pass over a sequence. The head runs on labeled frames, or on every
// frame when `all_frames` is set.
UnfoldedStates unfold_forward(const Model& model, const SequenceBatch& batch,
                              bool all_frames = false);

// Gradients of one layer given dL/d(output_t) for every step.
struct LayerGradients {
  CellParams d;
  std::vector<Vector> d_hidden;  // total dL/dh_t
  std::vector<Vector> d_pre;     // dL/da_t (stacked gate pre-activations for LSTMs)
  std::vector<Vector> d_input;   // dL/dx_t
};

LayerGradients backward_layer(const CellParams& params, const LayerTrace& trace,
                              std::span<const Vector> inputs, std::span<const Vector> d_output);

// Model-shaped gradient buffers plus the number of unfolded copies each
// parameter group was shared over.
struct GradientSet {
  Model d;
  std::size_t recurrent_sharing = 1;
  std::size_t head_sharing = 1;
};

struct BackwardResult {
  GradientSet grads;
  std::vector<LayerGradients> layers;
};

// Raw gradients of the summed cross-entropy (no sharing normalisation).
BackwardResult bptt_backward(const Model& model, const UnfoldedStates& states,
                             const SequenceBatch& batch);

// Recurrent tensors are divided by the number of unfolded steps, head tensors
// by the number of frames the head was applied to with a loss.
void normalize_by_sharing(GradientSet& grads);

}  // namespace hornn
