#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hornn/serialize.hpp"

namespace hornn {

// Feature pipeline applied to every split, in this order.
struct FeatureConfig {
  bool deltas = false;
  bool normalize = false;
  std::size_t delay = 0;
};

std::vector<SequenceBatch> prepare(std::vector<SequenceBatch> data, const FeatureConfig& features);

struct DataConfig {
  // Either a generated task or FSQ1 manifests. Generated validation and test
  // splits reuse the task with derived seeds.
  std::optional<TaskSpec> task;
  std::string train_manifest;
  std::string valid_manifest;
  std::string test_manifest;
  std::size_t valid_count = 0;
  std::size_t test_count = 0;
  bool deltas = false;
  bool normalize = false;
};

struct ExperimentConfig {
  std::vector<CellConfig> layers;
  TrainConfig train;
  DataConfig data;
  std::string out_dir = "out";
  // Drives model initialisation and sample shuffling.
  std::uint64_t seed = 1;
  double init_range = 0.05;

  // Checks the dimension chain, the unfold window and the data source. Runs
  // before any data is loaded or model memory is allocated.
  void validate() const;
  FeatureConfig features() const;
};

// Schema:
//   { "seed": 1, "init_range": 0.05, "out": "runs/a",
//     "layers": [ {"kind": "hornn_sigmoid", "d_x": 4, "d_h": 32, "n": 2, "m": 1} ],
//     "train": { "learning_rate": 0.002, "epochs": 20, ... },
//     "task": { "kind": "delayed_recall", "lag": 20, "classes": 4, ... },
//     "data": { "valid_count": 100, "test_count": 0, "deltas": false,
//               "normalize": false, "train_manifest": "...", ... } }
ExperimentConfig experiment_from_json(const Json& j);
Json to_json(const ExperimentConfig& c);
ExperimentConfig load_experiment(const std::string& path);

struct Datasets {
  std::vector<SequenceBatch> train;
  std::vector<SequenceBatch> valid;  // falls back to the training split
  std::vector<SequenceBatch> test;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
};

// Loads or generates every split and runs the feature pipeline. Throws
// DimensionError when frame dims or class counts disagree across splits.
Datasets load_datasets(const ExperimentConfig& config);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;
  EpochStats train;  // full pass over the training split after the epoch
  EpochStats valid;
};

Json to_json(const EpochLog& e);
EpochLog epoch_log_from_json(const Json& j);

struct TrainRun {
  Model model;
  Schedule schedule;
  std::vector<EpochLog> log;
  bool finished = false;
};

TrainRun start_run(const ExperimentConfig& config, const Datasets& data);

// Trains until config.train.epochs epochs are logged or the schedule stops.
// `after_epoch` runs after every epoch; returning false stops early.
void continue_run(TrainRun& run, const ExperimentConfig& config, const Datasets& data,
                  const std::function<bool(const TrainRun&)>& after_epoch = {});

// Checkpoint state stored in the model file trailer.
Json checkpoint_state(const TrainRun& run, const ExperimentConfig& config);
TrainRun resume_run(const ModelFile& file);

std::string train_log_csv(const std::vector<EpochLog>& log);

}  // namespace hornn
