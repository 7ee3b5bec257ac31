// OpenMP kernels for minibatch gradients and evaluation. The serial reference
// path lives in train.cpp.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <utility>

#include <omp.h>

#include "hornn/errors.hpp"
#include "hornn/train.hpp"

namespace hornn {

namespace {

constexpr std::size_t kBlock = 128;

// Exceptions must not escape an OpenMP region; keep the first and rethrow.
class ErrorSlot {
 public:
  template <class F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr error_;
};

}  // namespace

MinibatchResult minibatch_gradient_parallel(const Model& model,
                                            std::span<const SequenceBatch> samples) {
  const std::size_t P = model.parameter_count();
  std::vector<double> acc(P, 0.0);
  std::vector<double> buffer;
  std::vector<double> loss(std::min(kBlock, samples.size()));
  std::vector<std::size_t> frames(loss.size());
  std::vector<std::size_t> correct(loss.size());
  double total_loss = 0.0;
  std::size_t total_frames = 0;
  std::size_t total_correct = 0;

  for (std::size_t start = 0; start < samples.size(); start += kBlock) {
    const std::size_t n = std::min(kBlock, samples.size() - start);
    buffer.assign(n * P, 0.0);
    const auto ln = static_cast<std::ptrdiff_t>(n);
    ErrorSlot errors;

#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t s = 0; s < ln; ++s) errors.run([&] {
      const SequenceBatch& sample = samples[start + static_cast<std::size_t>(s)];
      const UnfoldedStates states = unfold_forward(model, sample);
      BackwardResult back = bptt_backward(model, states, sample);
      normalize_by_sharing(back.grads);
      std::size_t offset = static_cast<std::size_t>(s) * P;
      std::as_const(back.grads.d).for_each_tensor([&](int, const ConstTensorRef& t) {
        std::copy(t.values.begin(), t.values.end(), buffer.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += t.values.size();
      });
      loss[static_cast<std::size_t>(s)] = states.loss;
      frames[static_cast<std::size_t>(s)] = states.labeled;
      correct[static_cast<std::size_t>(s)] = states.correct;
    });
    errors.rethrow();

    // Each parameter sums its samples in order, matching the serial path.
    const auto lp = static_cast<std::ptrdiff_t>(P);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < lp; ++j) {
      double a = acc[static_cast<std::size_t>(j)];
      for (std::size_t s = 0; s < n; ++s) a += buffer[s * P + static_cast<std::size_t>(j)];
      acc[static_cast<std::size_t>(j)] = a;
    }
    for (std::size_t s = 0; s < n; ++s) {
      total_loss += loss[s];
      total_frames += frames[s];
      total_correct += correct[s];
    }
  }

  MinibatchResult r;
  r.grads.d = Model::zeros_like(model);
  r.grads.d.assign_flat(acc);
  r.loss = total_loss;
  r.frames = total_frames;
  r.correct = total_correct;
  return r;
}

EpochStats evaluate(const Model& model, std::span<const SequenceBatch> data, bool parallel) {
  std::vector<double> loss(data.size());
  std::vector<std::size_t> frames(data.size());
  std::vector<std::size_t> correct(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  ErrorSlot errors;
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) errors.run([&] {
    const auto k = static_cast<std::size_t>(i);
    const UnfoldedStates st = unfold_forward(model, data[k]);
    loss[k] = st.loss;
    frames[k] = st.labeled;
    correct[k] = st.correct;
  });
  errors.rethrow();
  EpochStats stats;
  double total = 0.0;
  std::size_t ok = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    total += loss[k];
    stats.frames += frames[k];
    ok += correct[k];
  }
  if (stats.frames > 0) {
    stats.mean_ce = total / static_cast<double>(stats.frames);
    stats.frame_acc = static_cast<double>(ok) / static_cast<double>(stats.frames);
  }
  return stats;
}

void configure_threads_from_env() {
  const char* env = std::getenv("HORNN_LAB_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long cap = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || cap < 1) {
    throw ConfigError(std::string("HORNN_LAB_THREADS must be a positive integer, got '") + env + "'");
  }
  omp_set_num_threads(std::min(static_cast<int>(cap), omp_get_num_procs()));
}

int worker_threads() { return omp_get_max_threads(); }

}  // namespace hornn
