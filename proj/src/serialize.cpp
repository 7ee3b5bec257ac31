#include "hornn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "hornn/errors.hpp"

namespace hornn {

namespace {

// Reads fields from a JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw FormatError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw FormatError(where_ + ": missing '" + key + "'");
    T out{};
    get(key, out);
    return out;
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw FormatError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw FormatError(std::string("model file: truncated ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void put_block(std::ostream& out, const Json& j) {
  const std::string s = j.dump();
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

Json get_block(std::istream& in, const char* what) {
  const std::uint64_t len = get_u64(in, what);
  if (len > (std::uint64_t{1} << 30)) throw FormatError(std::string("model file: oversized ") + what);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), static_cast<std::streamsize>(len))) {
    throw FormatError(std::string("model file: truncated ") + what);
  }
  try {
    return Json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: bad ") + what + ": " + e.what());
  }
}

constexpr char kModelMagic[8] = {'H', 'R', 'N', 'N', 'M', 'D', 'L', '1'};

}  // namespace

Json to_json(const CellConfig& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["d_x"] = c.d_x;
  j["d_h"] = c.d_h;
  if (is_projected(c.kind)) j["d_p"] = c.d_p;
  if (is_high_order(c.kind)) j["n"] = c.n;
  if (has_shortcut(c.kind)) j["m"] = c.m;
  j["activation"] = to_string(c.activation);
  if (c.activation == ActivationKind::PSigmoid) j["freeze_scale"] = c.freeze_scale;
  return j;
}

CellConfig cell_config_from_json(const Json& j) {
  ObjectReader r(j, "layer");
  const CellKind kind = parse_cell_kind(r.require<std::string>("kind"));
  const auto d_x = r.require<std::size_t>("d_x");
  const auto d_h = r.require<std::size_t>("d_h");
  std::size_t d_p = 0;
  r.get("d_p", d_p);
  CellConfig c = CellConfig::make(kind, d_x, d_h, 0);
  c.d_p = d_p;
  r.get("n", c.n);
  r.get("m", c.m);
  if (r.has("activation")) c.activation = parse_activation(r.require<std::string>("activation"));
  r.get("freeze_scale", c.freeze_scale);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["unfold_steps"] = c.unfold_steps;
  j["clip_threshold"] = c.clip_threshold;
  j["clip_ref_batch"] = c.clip_ref_batch;
  j["target_delay"] = c.target_delay;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["minibatch_frames"] = c.minibatch_frames;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["sample_mode"] = to_string(c.sample_mode);
  j["ramp_threshold"] = c.ramp_threshold;
  j["stop_threshold"] = c.stop_threshold;
  j["schedule"] = c.newbob ? "newbob" : "fixed";
  j["parallel"] = c.parallel;
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  ObjectReader r(j, "train");
  r.get("unfold_steps", c.unfold_steps);
  r.get("clip_threshold", c.clip_threshold);
  r.get("clip_ref_batch", c.clip_ref_batch);
  r.get("target_delay", c.target_delay);
  r.get("learning_rate", c.learning_rate);
  r.get("weight_decay", c.weight_decay);
  r.get("minibatch_frames", c.minibatch_frames);
  r.get("seed", c.seed);
  r.get("epochs", c.epochs);
  if (r.has("sample_mode")) c.sample_mode = parse_sample_mode(r.require<std::string>("sample_mode"));
  r.get("ramp_threshold", c.ramp_threshold);
  r.get("stop_threshold", c.stop_threshold);
  if (r.has("schedule")) {
    const auto name = r.require<std::string>("schedule");
    if (name != "newbob" && name != "fixed") throw ConfigError("train.schedule must be newbob or fixed");
    c.newbob = name == "newbob";
  }
  r.get("parallel", c.parallel);
  r.finish();
  return c;
}

Json to_json(const TaskSpec& t) {
  Json j;
  j["kind"] = to_string(t.kind);
  switch (t.kind) {
    case TaskKind::DelayedRecall:
      j["lag"] = t.lag;
      j["classes"] = t.classes;
      break;
    case TaskKind::ParityWindow:
      j["window"] = t.window;
      break;
    case TaskKind::MarkovFrames:
      j["states"] = t.states;
      j["emission_dim"] = t.emission_dim;
      break;
  }
  j["length"] = t.length;
  j["count"] = t.count;
  j["seed"] = t.seed;
  j["noise"] = t.noise;
  j["utterances_per_segment"] = t.utterances_per_segment;
  return j;
}

TaskSpec task_spec_from_json(const Json& j, TaskSpec t) {
  ObjectReader r(j, "task");
  if (r.has("kind")) t.kind = parse_task_kind(r.require<std::string>("kind"));
  r.get("lag", t.lag);
  r.get("classes", t.classes);
  r.get("window", t.window);
  r.get("states", t.states);
  r.get("emission_dim", t.emission_dim);
  r.get("length", t.length);
  r.get("count", t.count);
  r.get("seed", t.seed);
  r.get("noise", t.noise);
  r.get("utterances_per_segment", t.utterances_per_segment);
  r.finish();
  return t;
}

Json to_json(const Schedule& s) {
  Json j;
  j["learning_rate"] = s.learning_rate;
  j["ramp_threshold"] = s.ramp_threshold;
  j["stop_threshold"] = s.stop_threshold;
  j["newbob"] = s.newbob;
  j["halving"] = s.halving;
  j["stopped"] = s.stopped;
  j["lr_history"] = s.lr_history;
  j["valid_history"] = s.valid_history;
  return j;
}

Schedule schedule_from_json(const Json& j) {
  ObjectReader r(j, "schedule");
  Schedule s;
  r.get("learning_rate", s.learning_rate);
  r.get("ramp_threshold", s.ramp_threshold);
  r.get("stop_threshold", s.stop_threshold);
  r.get("newbob", s.newbob);
  r.get("halving", s.halving);
  r.get("stopped", s.stopped);
  r.get("lr_history", s.lr_history);
  r.get("valid_history", s.valid_history);
  r.finish();
  return s;
}

void write_model(std::ostream& out, const Model& model, const Json& state) {
  Json manifest;
  manifest["format"] = "hornn-model";
  manifest["num_classes"] = model.num_classes();
  manifest["layers"] = Json::array();
  for (const CellParams& p : model.layers) manifest["layers"].push_back(to_json(p.config));
  manifest["tensors"] = Json::array();
  model.for_each_tensor([&](int layer, const ConstTensorRef& t) {
    manifest["tensors"].push_back(
        {{"layer", layer}, {"name", std::string(t.name)}, {"rows", t.rows}, {"cols", t.cols}});
  });

  out.write(kModelMagic, sizeof kModelMagic);
  put_block(out, manifest);
  model.for_each_tensor([&](int, const ConstTensorRef& t) {
    for (double v : t.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  });
  put_block(out, state.is_null() ? Json::object() : state);
  if (!out) throw std::runtime_error("model file: write failed");
}

ModelFile read_model(std::istream& in) {
  char magic[sizeof kModelMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kModelMagic, sizeof magic) != 0) {
    throw FormatError("model file: bad magic");
  }
  const Json manifest = get_block(in, "manifest");
  std::vector<CellConfig> configs;
  std::size_t classes = 0;
  try {
    for (const Json& l : manifest.at("layers")) configs.push_back(cell_config_from_json(l));
    classes = manifest.at("num_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: bad manifest: ") + e.what());
  }

  ModelFile file;
  file.model = Model::create(configs, classes, 0);
  const Json tensors = manifest.value("tensors", Json::array());
  std::size_t index = 0;
  try {
  file.model.for_each_tensor([&](int layer, const TensorRef& t) {
    if (index >= tensors.size()) throw FormatError("model file: manifest lists too few tensors");
    const Json& e = tensors[index++];
    if (e.at("layer").get<int>() != layer || e.at("name").get<std::string>() != t.name ||
        e.at("rows").get<std::size_t>() != t.rows || e.at("cols").get<std::size_t>() != t.cols) {
      throw FormatError("model file: tensor " + std::to_string(index - 1) + " (" +
                        e.at("name").get<std::string>() + ") does not match the layer configs");
    }
    for (double& v : t.values) v = std::bit_cast<double>(get_u64(in, "tensor data"));
  });
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: bad tensor entry: ") + e.what());
  }
  if (index != tensors.size()) throw FormatError("model file: manifest lists extra tensors");
  file.state = get_block(in, "state");
  return file;
}

void save_model(const std::filesystem::path& path, const Model& model, const Json& state) {
  // Write to a sibling file first so an interrupted save leaves the old one.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    write_model(out, model, state);
  }
  std::filesystem::rename(tmp, path);
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  try {
    return read_model(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace hornn
