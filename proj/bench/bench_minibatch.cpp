// Serial reference vs OpenMP minibatch gradient. Prints one line per path and
// checks that both produce the same bits.

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "hornn/tasks.hpp"
#include "hornn/train.hpp"

using namespace hornn;

namespace {

template <class F>
double best_seconds(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t samples = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 256;
  configure_threads_from_env();

  TaskSpec task;
  task.kind = TaskKind::MarkovFrames;
  task.emission_dim = 40;
  task.states = 8;
  task.length = 100;
  task.count = 8;
  const auto data = generate(task);

  TrainConfig tc;
  const auto refs = make_samples(data, tc);
  std::vector<SequenceBatch> batch;
  for (std::size_t i = 0; i < samples && i < refs.size(); ++i) {
    batch.push_back(materialize(data[refs[i].sequence], refs[i]));
  }

  const CellConfig layers[] = {CellConfig::make(CellKind::HornnpSigmoid, 40, 128, 64)};
  const Model model = Model::create(layers, task.states, 7);

  MinibatchResult serial;
  MinibatchResult parallel;
  const double ts = best_seconds(3, [&] { serial = minibatch_gradient_serial(model, batch); });
  const double tp = best_seconds(3, [&] { parallel = minibatch_gradient_parallel(model, batch); });
  const bool same = serial.grads.d == parallel.grads.d && serial.loss == parallel.loss;

  std::printf("samples=%zu threads=%d\n", batch.size(), worker_threads());
  std::printf("serial    %.4f s\n", ts);
  std::printf("parallel  %.4f s  speedup %.2fx\n", tp, ts / tp);
  std::printf("bitwise identical: %s\n", same ? "yes" : "NO");
  return same ? 0 : 1;
}
