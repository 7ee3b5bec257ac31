#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hornn/bptt.hpp"

namespace hornn {

enum class SampleMode {
  // One sample per labeled frame: the target frame and up to unfold_steps
  // frames of left context, unfolded from zero state.
  FrameWindow,
  // One sample per utterance, every frame scored, unfolded over the whole
  // utterance.
  Utterance,
};

std::string to_string(SampleMode mode);
SampleMode parse_sample_mode(const std::string& name);

struct TrainConfig {
  std::size_t unfold_steps = 20;
  double clip_threshold = 0.32;
  std::size_t clip_ref_batch = 800;
  std::size_t target_delay = 5;
  double learning_rate = 2e-3;
  double weight_decay = 0.0;
  std::size_t minibatch_frames = 800;
  std::uint64_t seed = 1;
  std::size_t epochs = 20;
  SampleMode sample_mode = SampleMode::FrameWindow;
  double ramp_threshold = 0.005;
  double stop_threshold = 0.001;
  // false keeps the learning rate constant and never stops early.
  bool newbob = true;
  bool parallel = true;

  // Rejects unfold windows shorter than the largest lag of any layer.
  void validate(std::span<const CellConfig> layers) const;
};

// Per-component update bound, scaled linearly from the reference batch size.
double clip_bound(const TrainConfig& config);

// params += clamp(-lr * (grad + weight_decay * param), -tau, tau). Weight
// decay touches weight tensors only. Throws NumericError on a non-finite
// gradient before anything is modified.
void clip_and_update(Model& params, const GradientSet& grads, double lr, const TrainConfig& config);

// A training sample: frames [begin, end) of one sequence, scored at `target`
// only, or at every labeled frame when target == kAllFrames.
struct SampleRef {
  static constexpr std::size_t kAllFrames = std::numeric_limits<std::size_t>::max();
  std::size_t sequence = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t target = kAllFrames;
};

std::vector<SampleRef> make_samples(std::span<const SequenceBatch> data, const TrainConfig& config);
SequenceBatch materialize(const SequenceBatch& sequence, const SampleRef& ref);

struct MinibatchResult {
  GradientSet grads;  // summed over samples, each normalised by its sharing counts
  double loss = 0.0;
  std::size_t frames = 0;
  std::size_t correct = 0;
};

// Reference implementation: samples processed one after another.
MinibatchResult minibatch_gradient_serial(const Model& model, std::span<const SequenceBatch> samples);
// OpenMP implementation. Per-sample gradients are reduced in sample order, so
// the result is bit-identical to the serial one for any thread count.
MinibatchResult minibatch_gradient_parallel(const Model& model,
                                            std::span<const SequenceBatch> samples);

struct EpochStats {
  double mean_ce = 0.0;
  double frame_acc = 0.0;
  std::size_t frames = 0;
};

// One pass over shuffled samples with an update after every minibatch. The
// returned stats come from the forward passes made before each update.
EpochStats train_epoch(Model& model, std::span<const SequenceBatch> data, const TrainConfig& config,
                       double learning_rate, std::size_t epoch);

// Full-utterance forward pass from zero state over every labeled frame.
EpochStats evaluate(const Model& model, std::span<const SequenceBatch> data, bool parallel = true);

struct Schedule {
  double learning_rate = 0.0;
  double ramp_threshold = 0.005;
  double stop_threshold = 0.001;
  bool newbob = true;
  bool halving = false;
  bool stopped = false;
  std::vector<double> lr_history;
  std::vector<double> valid_history;

  static Schedule start(const TrainConfig& config);
};

struct NewbobDecision {
  double learning_rate;
  bool stop;
};

// Relative validation improvement below ramp_threshold starts halving; once
// halving, the rate halves every epoch until the improvement drops below
// stop_threshold. With newbob off only the histories are updated.
NewbobDecision newbob_step(Schedule& schedule, double validation_loss);

// Applies HORNN_LAB_THREADS as an upper bound on OpenMP workers.
void configure_threads_from_env();
int worker_threads();

}  // namespace hornn
