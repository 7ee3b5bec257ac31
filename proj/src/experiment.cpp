#include "hornn/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hornn/errors.hpp"
#include "hornn/fsq.hpp"

namespace hornn {

namespace {

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t split) {
  return seed * 0x9E3779B97F4A7C15ULL + split;
}

template <class T>
void read_if(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config.") + key + ": " + e.what());
  }
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw FormatError(where + ": unknown key '" + key + "'");
  }
}

void check_split(const std::vector<SequenceBatch>& split, const char* name, std::size_t dim,
                 std::size_t classes) {
  for (const SequenceBatch& b : split) {
    if (b.dim() != dim || b.num_classes != classes) {
      throw DimensionError(std::string(name) + " sequence '" + b.utterance_id + "' has D=" +
                           std::to_string(b.dim()) + ", C=" + std::to_string(b.num_classes) +
                           "; expected D=" + std::to_string(dim) + ", C=" + std::to_string(classes));
    }
  }
}

}  // namespace

std::vector<SequenceBatch> prepare(std::vector<SequenceBatch> data, const FeatureConfig& f) {
  if (f.deltas) {
    for (SequenceBatch& b : data) b.frames = delta_expand(b.frames);
  }
  if (f.normalize) normalize(data);
  if (f.delay > 0) {
    for (SequenceBatch& b : data) b = apply_delay(b, f.delay);
  }
  return data;
}

void ExperimentConfig::validate() const {
  validate_stack(layers);
  train.validate(layers);
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
  if (data.task && !data.train_manifest.empty()) {
    throw ConfigError("give either a task or a training manifest, not both");
  }
  if (!data.task && data.train_manifest.empty()) {
    throw ConfigError("no training data: set a task or data.train_manifest");
  }
  if (data.task) {
    data.task->validate();
    const std::size_t dim = data.task->frame_dim() * (data.deltas ? 2 : 1);
    if (dim != layers.front().d_x) {
      throw DimensionError("task frames have D=" + std::to_string(dim) + " but layer 0 expects d_x=" +
                           std::to_string(layers.front().d_x));
    }
  }
}

FeatureConfig ExperimentConfig::features() const {
  return {data.deltas, data.normalize, train.target_delay};
}

ExperimentConfig experiment_from_json(const Json& j) {
  check_keys(j, {"seed", "init_range", "out", "layers", "train", "task", "data"}, "config");
  ExperimentConfig c;
  read_if(j, "seed", c.seed);
  read_if(j, "init_range", c.init_range);
  read_if(j, "out", c.out_dir);
  if (j.contains("layers")) {
    if (!j.at("layers").is_array()) throw FormatError("config.layers: expected an array");
    for (const Json& l : j.at("layers")) c.layers.push_back(cell_config_from_json(l));
  }
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  c.train.seed = c.seed;
  if (j.contains("task")) c.data.task = task_spec_from_json(j.at("task"));
  if (j.contains("data")) {
    const Json& d = j.at("data");
    check_keys(d,
               {"train_manifest", "valid_manifest", "test_manifest", "valid_count", "test_count",
                "deltas", "normalize"},
               "config.data");
    read_if(d, "train_manifest", c.data.train_manifest);
    read_if(d, "valid_manifest", c.data.valid_manifest);
    read_if(d, "test_manifest", c.data.test_manifest);
    read_if(d, "valid_count", c.data.valid_count);
    read_if(d, "test_count", c.data.test_count);
    read_if(d, "deltas", c.data.deltas);
    read_if(d, "normalize", c.data.normalize);
  }
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["init_range"] = c.init_range;
  j["out"] = c.out_dir;
  j["layers"] = Json::array();
  for (const CellConfig& l : c.layers) j["layers"].push_back(to_json(l));
  j["train"] = to_json(c.train);
  if (c.data.task) j["task"] = to_json(*c.data.task);
  Json d;
  if (!c.data.train_manifest.empty()) d["train_manifest"] = c.data.train_manifest;
  if (!c.data.valid_manifest.empty()) d["valid_manifest"] = c.data.valid_manifest;
  if (!c.data.test_manifest.empty()) d["test_manifest"] = c.data.test_manifest;
  d["valid_count"] = c.data.valid_count;
  d["test_count"] = c.data.test_count;
  d["deltas"] = c.data.deltas;
  d["normalize"] = c.data.normalize;
  j["data"] = d;
  return j;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return experiment_from_json(j);
}

Datasets load_datasets(const ExperimentConfig& config) {
  config.validate();
  Datasets d;
  std::vector<SequenceBatch> train;
  std::vector<SequenceBatch> valid;
  std::vector<SequenceBatch> test;
  if (config.data.task) {
    TaskSpec t = *config.data.task;
    train = generate(t);
    if (config.data.valid_count > 0) {
      TaskSpec v = t;
      v.count = config.data.valid_count;
      v.seed = split_seed(t.seed, 1);
      valid = generate(v);
    }
    if (config.data.test_count > 0) {
      TaskSpec s = t;
      s.count = config.data.test_count;
      s.seed = split_seed(t.seed, 2);
      test = generate(s);
    }
  } else {
    train = read_manifest(config.data.train_manifest);
    if (!config.data.valid_manifest.empty()) valid = read_manifest(config.data.valid_manifest);
    if (!config.data.test_manifest.empty()) test = read_manifest(config.data.test_manifest);
  }

  const FeatureConfig f = config.features();
  d.train = prepare(std::move(train), f);
  d.valid = valid.empty() ? d.train : prepare(std::move(valid), f);
  d.test = prepare(std::move(test), f);
  d.dim = d.train.front().dim();
  d.num_classes = d.train.front().num_classes;
  check_split(d.train, "train", d.dim, d.num_classes);
  check_split(d.valid, "valid", d.dim, d.num_classes);
  check_split(d.test, "test", d.dim, d.num_classes);
  if (d.dim != config.layers.front().d_x) {
    throw DimensionError("data frames have D=" + std::to_string(d.dim) + " but layer 0 expects d_x=" +
                         std::to_string(config.layers.front().d_x));
  }
  return d;
}

Json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"learning_rate", e.learning_rate},
          {"train_ce", e.train.mean_ce},
          {"train_facc", e.train.frame_acc},
          {"train_frames", e.train.frames},
          {"valid_ce", e.valid.mean_ce},
          {"valid_facc", e.valid.frame_acc},
          {"valid_frames", e.valid.frames}};
}

EpochLog epoch_log_from_json(const Json& j) {
  EpochLog e;
  try {
    e.epoch = j.at("epoch").get<std::size_t>();
    e.learning_rate = j.at("learning_rate").get<double>();
    e.train.mean_ce = j.at("train_ce").get<double>();
    e.train.frame_acc = j.at("train_facc").get<double>();
    e.train.frames = j.at("train_frames").get<std::size_t>();
    e.valid.mean_ce = j.at("valid_ce").get<double>();
    e.valid.frame_acc = j.at("valid_facc").get<double>();
    e.valid.frames = j.at("valid_frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("checkpoint log entry: ") + ex.what());
  }
  return e;
}

TrainRun start_run(const ExperimentConfig& config, const Datasets& data) {
  config.validate();
  TrainRun run;
  run.model = Model::create(config.layers, data.num_classes, config.seed, config.init_range);
  run.schedule = Schedule::start(config.train);
  return run;
}

void continue_run(TrainRun& run, const ExperimentConfig& config, const Datasets& data,
                  const std::function<bool(const TrainRun&)>& after_epoch) {
  const TrainConfig& tc = config.train;
  while (!run.finished && run.log.size() < tc.epochs) {
    const std::size_t epoch = run.log.size();
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.learning_rate = run.schedule.learning_rate;
    train_epoch(run.model, data.train, tc, run.schedule.learning_rate, epoch);
    entry.train = evaluate(run.model, data.train, tc.parallel);
    entry.valid = evaluate(run.model, data.valid, tc.parallel);
    run.log.push_back(entry);
    const NewbobDecision d = newbob_step(run.schedule, entry.valid.mean_ce);
    if (d.stop || run.log.size() >= tc.epochs) run.finished = true;
    if (after_epoch && !after_epoch(run)) {
      run.finished = true;
      return;
    }
  }
  run.finished = true;
}

Json checkpoint_state(const TrainRun& run, const ExperimentConfig& config) {
  Json s;
  s["experiment"] = to_json(config);
  s["schedule"] = to_json(run.schedule);
  s["log"] = Json::array();
  for (const EpochLog& e : run.log) s["log"].push_back(to_json(e));
  s["finished"] = run.finished;
  return s;
}

TrainRun resume_run(const ModelFile& file) {
  if (!file.state.contains("schedule") || !file.state.contains("log")) {
    throw FormatError("model file carries no checkpoint state");
  }
  TrainRun run;
  run.model = file.model;
  run.schedule = schedule_from_json(file.state.at("schedule"));
  for (const Json& e : file.state.at("log")) run.log.push_back(epoch_log_from_json(e));
  // A run that ended on its epoch budget can be extended; a stopped schedule
  // stays stopped.
  run.finished = run.schedule.stopped;
  return run;
}

std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,lr,train_ce,train_facc,valid_ce,valid_facc\n";
  char line[256];
  for (const EpochLog& e : log) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.learning_rate,
                  e.train.mean_ce, e.train.frame_acc, e.valid.mean_ce, e.valid.frame_acc);
    out << line;
  }
  return out.str();
}

}  // namespace hornn
