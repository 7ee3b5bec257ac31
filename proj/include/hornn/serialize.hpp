#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "hornn/model.hpp"
#include "hornn/tasks.hpp"
#include "hornn/train.hpp"

namespace hornn {

using Json = nlohmann::ordered_json;

// JSON forms. Parsing fills unspecified fields with defaults and rejects
// unknown keys, so a typo in a config file is an error rather than a no-op.
Json to_json(const CellConfig& c);
CellConfig cell_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json to_json(const TaskSpec& t);
TaskSpec task_spec_from_json(const Json& j, TaskSpec base = {});
Json to_json(const Schedule& s);
Schedule schedule_from_json(const Json& j);

// Model file layout, little endian:
//   "HRNNMDL1" | u64 len | JSON manifest | f64 values in manifest order
//   | u64 len | JSON state (empty object when absent)
// The manifest records the layer configs, class count and every tensor's
// layer, name and shape. The trailing state block carries checkpoint data.
struct ModelFile {
  Model model;
  Json state = Json::object();
};

void write_model(std::ostream& out, const Model& model, const Json& state = Json::object());
ModelFile read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const Model& model,
                const Json& state = Json::object());
ModelFile load_model(const std::filesystem::path& path);

}  // namespace hornn
