#include "hornn/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "hornn/errors.hpp"

namespace hornn {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::DelayedRecall: return "delayed_recall";
    case TaskKind::ParityWindow: return "parity_window";
    case TaskKind::MarkovFrames: return "markov_frames";
  }
  return "unknown";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "delayed_recall") return TaskKind::DelayedRecall;
  if (name == "parity_window") return TaskKind::ParityWindow;
  if (name == "markov_frames") return TaskKind::MarkovFrames;
  throw ConfigError("unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
  if (length == 0) throw ConfigError("task length must be positive");
  if (count == 0) throw ConfigError("task count must be positive");
  if (!(noise >= 0.0)) throw ConfigError("task noise must be non-negative");
  if (utterances_per_segment == 0) throw ConfigError("utterances_per_segment must be positive");
  switch (kind) {
    case TaskKind::DelayedRecall:
      if (classes < 2) throw ConfigError("delayed_recall needs at least 2 classes");
      if (lag >= length) throw ConfigError("delayed_recall lag must be shorter than the sequence");
      break;
    case TaskKind::ParityWindow:
      if (window == 0 || window >= length) {
        throw ConfigError("parity_window window must be in [1, length)");
      }
      break;
    case TaskKind::MarkovFrames:
      if (states < 2) throw ConfigError("markov_frames needs at least 2 states");
      if (emission_dim == 0) throw ConfigError("markov_frames emission_dim must be positive");
      break;
  }
}

std::size_t TaskSpec::frame_dim() const {
  switch (kind) {
    case TaskKind::DelayedRecall: return classes;
    case TaskKind::ParityWindow: return 2;
    case TaskKind::MarkovFrames: return emission_dim;
  }
  return 0;
}

std::size_t TaskSpec::num_classes() const {
  switch (kind) {
    case TaskKind::DelayedRecall: return classes;
    case TaskKind::ParityWindow: return 2;
    case TaskKind::MarkovFrames: return states;
  }
  return 0;
}

namespace {

double to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

// One-hot of `symbol` plus Gaussian noise.
void noisy_one_hot(std::span<double> row, std::size_t symbol, double noise, Rng& rng) {
  for (std::size_t k = 0; k < row.size(); ++k) {
    row[k] = to_float((k == symbol ? 1.0 : 0.0) + noise * rng.normal());
  }
}

}  // namespace

std::vector<SequenceBatch> generate(const TaskSpec& task) {
  task.validate();
  Rng rng(task.seed);
  const std::size_t T = task.length;
  const std::size_t D = task.frame_dim();

  Matrix means;
  if (task.kind == TaskKind::MarkovFrames) {
    means = Matrix(task.states, D);
    for (double& v : means.span()) v = rng.normal();
  }

  std::vector<SequenceBatch> out;
  out.reserve(task.count);
  for (std::size_t i = 0; i < task.count; ++i) {
    SequenceBatch b;
    b.frames = Matrix(T, D);
    b.labels.assign(T, 0);
    b.num_classes = task.num_classes();
    b.utterance_id = numbered("utt", i);
    b.segment_id = numbered("seg", i / task.utterances_per_segment);

    switch (task.kind) {
      case TaskKind::DelayedRecall: {
        std::vector<std::size_t> s(T);
        for (std::size_t t = 0; t < T; ++t) {
          s[t] = rng.below(task.classes);
          noisy_one_hot(b.frames.row(t), s[t], task.noise, rng);
          b.labels[t] = t >= task.lag ? static_cast<std::int32_t>(s[t - task.lag]) : 0;
        }
        break;
      }
      case TaskKind::ParityWindow: {
        std::vector<std::size_t> bits(T);
        for (std::size_t t = 0; t < T; ++t) {
          bits[t] = rng.below(2);
          noisy_one_hot(b.frames.row(t), bits[t], task.noise, rng);
          std::size_t parity = 0;
          for (std::size_t k = 0; k < task.window && k <= t; ++k) parity ^= bits[t - k];
          b.labels[t] = static_cast<std::int32_t>(parity);
        }
        break;
      }
      case TaskKind::MarkovFrames: {
        std::size_t state = rng.below(task.states);
        for (std::size_t t = 0; t < T; ++t) {
          if (t > 0 && rng.uniform01() >= 0.9) {
            // Jump to one of the other states.
            state = (state + 1 + rng.below(task.states - 1)) % task.states;
          }
          auto row = b.frames.row(t);
          for (std::size_t k = 0; k < D; ++k) {
            row[k] = to_float(means(state, k) + task.noise * rng.normal());
          }
          b.labels[t] = static_cast<std::int32_t>(state);
        }
        break;
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

Matrix delta_expand(const Matrix& frames) {
  const std::size_t T = frames.rows();
  const std::size_t D = frames.cols();
  if (T == 0) throw ConfigError("delta_expand: empty sequence");
  Matrix out(T, 2 * D);
  const auto at = [&](std::ptrdiff_t t, std::size_t k) {
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(T) - 1;
    return frames(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, last)), k);
  };
  for (std::size_t t = 0; t < T; ++t) {
    const auto ti = static_cast<std::ptrdiff_t>(t);
    for (std::size_t k = 0; k < D; ++k) {
      out(t, k) = frames(t, k);
      const double num = (at(ti + 1, k) - at(ti - 1, k)) + 2.0 * (at(ti + 2, k) - at(ti - 2, k));
      out(t, D + k) = num / 10.0;
    }
  }
  return out;
}

void normalize(std::span<SequenceBatch> batches) {
  for (SequenceBatch& b : batches) {
    const std::size_t T = b.length();
    if (T == 0) continue;
    for (std::size_t k = 0; k < b.dim(); ++k) {
      bool constant = true;
      double sum = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        sum += b.frames(t, k);
        constant = constant && b.frames(t, k) == b.frames(0, k);
      }
      if (constant) {
        for (std::size_t t = 0; t < T; ++t) b.frames(t, k) = 0.0;
        continue;
      }
      double mean = sum / static_cast<double>(T);
      // Second pass removes most of the rounding error in the first.
      double resid = 0.0;
      for (std::size_t t = 0; t < T; ++t) resid += b.frames(t, k) - mean;
      mean += resid / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t) b.frames(t, k) -= mean;
    }
  }

  std::map<std::string, std::vector<SequenceBatch*>> segments;
  for (SequenceBatch& b : batches) segments[b.segment_id].push_back(&b);
  for (auto& [id, members] : segments) {
    const std::size_t D = members.front()->dim();
    for (const SequenceBatch* b : members) {
      if (b->dim() != D) throw DimensionError("segment '" + id + "' mixes frame dims");
    }
    for (std::size_t k = 0; k < D; ++k) {
      double ss = 0.0;
      std::size_t n = 0;
      for (const SequenceBatch* b : members) {
        for (std::size_t t = 0; t < b->length(); ++t) ss += b->frames(t, k) * b->frames(t, k);
        n += b->length();
      }
      const double var = n ? ss / static_cast<double>(n) : 0.0;
      if (!(var > 0.0)) continue;
      const double sd = std::sqrt(var);
      for (SequenceBatch* b : members) {
        for (std::size_t t = 0; t < b->length(); ++t) b->frames(t, k) /= sd;
      }
    }
  }
}

SequenceBatch apply_delay(const SequenceBatch& batch, std::size_t delay) {
  const std::size_t T = batch.length();
  if (delay >= T) {
    throw ConfigError("apply_delay: delay " + std::to_string(delay) + " must be shorter than the " +
                      std::to_string(T) + "-frame sequence");
  }
  SequenceBatch out = batch;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t src = std::min(t + delay, T - 1);
    std::ranges::copy(batch.frames.row(src), out.frames.row(t).begin());
  }
  return out;
}

}  // namespace hornn
