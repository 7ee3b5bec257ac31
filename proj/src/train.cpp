#include "hornn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hornn/errors.hpp"

namespace hornn {

std::string to_string(SampleMode mode) {
  return mode == SampleMode::FrameWindow ? "frame_window" : "utterance";
}

SampleMode parse_sample_mode(const std::string& name) {
  if (name == "frame_window" || name == "frame") return SampleMode::FrameWindow;
  if (name == "utterance") return SampleMode::Utterance;
  throw ConfigError("unknown sample mode '" + name + "'");
}

void TrainConfig::validate(std::span<const CellConfig> layers) const {
  if (!(clip_threshold > 0.0)) throw ConfigError("clip_threshold must be positive");
  if (clip_ref_batch == 0) throw ConfigError("clip_ref_batch must be positive");
  if (minibatch_frames == 0) throw ConfigError("minibatch_frames must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  std::size_t lag = 1;
  for (const CellConfig& c : layers) lag = std::max(lag, c.max_lag());
  if (sample_mode == SampleMode::FrameWindow && unfold_steps < lag) {
    throw ConfigError("unfold_steps=" + std::to_string(unfold_steps) +
                      " is shorter than the largest recurrent lag " + std::to_string(lag));
  }
}

double clip_bound(const TrainConfig& config) {
  return config.clip_threshold * (static_cast<double>(config.minibatch_frames) /
                                  static_cast<double>(config.clip_ref_batch));
}

void clip_and_update(Model& params, const GradientSet& grads, double lr, const TrainConfig& config) {
  grads.d.for_each_tensor([](int layer, const ConstTensorRef& t) {
    if (!all_finite(t.values)) {
      throw NumericError("non-finite gradient in " +
                         (layer < 0 ? std::string("head") : "layer " + std::to_string(layer)) +
                         " tensor " + std::string(t.name));
    }
  });
  const double tau = clip_bound(config);
  std::vector<std::span<const double>> g;
  grads.d.for_each_tensor([&](int, const ConstTensorRef& t) { g.push_back(t.values); });
  std::size_t i = 0;
  params.for_each_tensor([&](int layer, const TensorRef& t) {
    const std::span<const double> gt = g.at(i++);
    if (gt.size() != t.values.size()) throw DimensionError("gradient shape mismatch in " + std::string(t.name));
    if (t.role == TensorRole::Scale && params.layers[static_cast<std::size_t>(layer)].config.freeze_scale) {
      return;
    }
    const double wd = t.role == TensorRole::Weight ? config.weight_decay : 0.0;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const double u = -lr * (gt[k] + wd * t.values[k]);
      t.values[k] += std::clamp(u, -tau, tau);
    }
  });
}

std::vector<SampleRef> make_samples(std::span<const SequenceBatch> data, const TrainConfig& config) {
  std::vector<SampleRef> out;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const SequenceBatch& seq = data[s];
    if (config.sample_mode == SampleMode::Utterance) {
      if (seq.labeled_frames() > 0) out.push_back({s, 0, seq.length(), SampleRef::kAllFrames});
      continue;
    }
    for (std::size_t t = 0; t < seq.length(); ++t) {
      if (seq.labels[t] == kNoLabel) continue;
      const std::size_t begin = t + 1 > config.unfold_steps ? t + 1 - config.unfold_steps : 0;
      out.push_back({s, begin, t + 1, t});
    }
  }
  return out;
}

SequenceBatch materialize(const SequenceBatch& sequence, const SampleRef& ref) {
  if (ref.target == SampleRef::kAllFrames && ref.begin == 0 && ref.end == sequence.length()) {
    return sequence;
  }
  SequenceBatch out;
  const std::size_t len = ref.end - ref.begin;
  out.frames = Matrix(len, sequence.dim());
  for (std::size_t r = 0; r < len; ++r) {
    std::ranges::copy(sequence.frames.row(ref.begin + r), out.frames.row(r).begin());
  }
  out.labels.assign(len, kNoLabel);
  for (std::size_t r = 0; r < len; ++r) {
    const std::size_t t = ref.begin + r;
    if (ref.target == SampleRef::kAllFrames || t == ref.target) out.labels[r] = sequence.labels[t];
  }
  out.num_classes = sequence.num_classes;
  out.utterance_id = sequence.utterance_id;
  out.segment_id = sequence.segment_id;
  return out;
}

namespace {

struct SampleGradient {
  std::vector<double> flat;
  double loss = 0.0;
  std::size_t frames = 0;
  std::size_t correct = 0;
};

SampleGradient sample_gradient(const Model& model, const SequenceBatch& sample) {
  const UnfoldedStates states = unfold_forward(model, sample);
  BackwardResult back = bptt_backward(model, states, sample);
  normalize_by_sharing(back.grads);
  return {back.grads.d.flatten(), states.loss, states.labeled, states.correct};
}

MinibatchResult finish(const Model& model, std::vector<double>&& acc, double loss,
                       std::size_t frames, std::size_t correct) {
  MinibatchResult r;
  r.grads.d = Model::zeros_like(model);
  r.grads.d.assign_flat(acc);
  r.loss = loss;
  r.frames = frames;
  r.correct = correct;
  return r;
}

}  // namespace

MinibatchResult minibatch_gradient_serial(const Model& model,
                                          std::span<const SequenceBatch> samples) {
  std::vector<double> acc(model.parameter_count(), 0.0);
  double loss = 0.0;
  std::size_t frames = 0;
  std::size_t correct = 0;
  for (const SequenceBatch& s : samples) {
    const SampleGradient g = sample_gradient(model, s);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g.flat[j];
    loss += g.loss;
    frames += g.frames;
    correct += g.correct;
  }
  return finish(model, std::move(acc), loss, frames, correct);
}

EpochStats train_epoch(Model& model, std::span<const SequenceBatch> data, const TrainConfig& config,
                       double learning_rate, std::size_t epoch) {
  if (data.empty()) throw ConfigError("train_epoch: empty dataset");
  config.validate(model.configs());
  std::vector<SampleRef> samples = make_samples(data, config);
  if (samples.empty()) throw ConfigError("train_epoch: dataset has no labeled frames");
  Rng rng(config.seed ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)));
  rng.shuffle(std::span<SampleRef>(samples));

  EpochStats stats;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<SequenceBatch> batch;
  std::size_t i = 0;
  while (i < samples.size()) {
    batch.clear();
    std::size_t labeled = 0;
    while (i < samples.size() && (batch.empty() || labeled < config.minibatch_frames)) {
      batch.push_back(materialize(data[samples[i].sequence], samples[i]));
      labeled += batch.back().labeled_frames();
      ++i;
    }
    const MinibatchResult mb = config.parallel ? minibatch_gradient_parallel(model, batch)
                                               : minibatch_gradient_serial(model, batch);
    loss += mb.loss;
    stats.frames += mb.frames;
    correct += mb.correct;
    clip_and_update(model, mb.grads, learning_rate, config);
  }
  if (!std::isfinite(loss)) throw NumericError("training loss became non-finite");
  stats.mean_ce = stats.frames ? loss / static_cast<double>(stats.frames) : 0.0;
  stats.frame_acc =
      stats.frames ? static_cast<double>(correct) / static_cast<double>(stats.frames) : 0.0;
  return stats;
}

Schedule Schedule::start(const TrainConfig& config) {
  Schedule s;
  s.learning_rate = config.learning_rate;
  s.ramp_threshold = config.ramp_threshold;
  s.stop_threshold = config.stop_threshold;
  s.newbob = config.newbob;
  return s;
}

NewbobDecision newbob_step(Schedule& s, double validation_loss) {
  if (!std::isfinite(validation_loss)) throw NumericError("validation loss is not finite");
  s.lr_history.push_back(s.learning_rate);
  if (s.newbob && !s.valid_history.empty() && !s.stopped) {
    const double prev = s.valid_history.back();
    const double improvement = prev != 0.0 ? (prev - validation_loss) / std::abs(prev) : 0.0;
    if (s.halving) {
      if (improvement < s.stop_threshold) {
        s.stopped = true;
      } else {
        s.learning_rate *= 0.5;
      }
    } else if (improvement < s.ramp_threshold) {
      s.halving = true;
      s.learning_rate *= 0.5;
    }
  }
  s.valid_history.push_back(validation_loss);
  return {s.learning_rate, s.stopped};
}

}  // namespace hornn
