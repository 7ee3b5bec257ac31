#include "hornn/model.hpp"

#include <algorithm>

#include "hornn/errors.hpp"
#include "hornn/sequence.hpp"

namespace hornn {

std::size_t SequenceBatch::labeled_frames() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](std::int32_t y) { return y != kNoLabel; }));
}

void SequenceBatch::validate(bool allow_masked) const {
  if (labels.size() != frames.rows()) {
    throw DimensionError("sequence '" + utterance_id + "': " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(frames.rows()) + " frames");
  }
  if (num_classes < 2) throw ConfigError("sequence '" + utterance_id + "': need at least 2 classes");
  for (std::int32_t y : labels) {
    if (allow_masked && y == kNoLabel) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ConfigError("sequence '" + utterance_id + "': label " + std::to_string(y) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void validate_stack(std::span<const CellConfig> layers) {
  if (layers.empty()) throw ConfigError("model needs at least one recurrent layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].d_x != layers[i - 1].output_dim()) {
      throw DimensionError("layer " + std::to_string(i) + " expects d_x=" +
                           std::to_string(layers[i].d_x) + " but layer " + std::to_string(i - 1) +
                           " outputs " + std::to_string(layers[i - 1].output_dim()));
    }
  }
}

Model Model::create(std::span<const CellConfig> layers, std::size_t num_classes,
                    std::uint64_t seed, double range) {
  validate_stack(layers);
  if (num_classes < 2) throw ConfigError("model needs at least 2 output classes");
  Rng rng(seed);
  Model model;
  for (const CellConfig& c : layers) model.layers.push_back(CellParams::random(c, rng, range));
  const CellConfig& top = layers.back();
  HeadParams& head = model.head;
  head.activation =
      top.activation == ActivationKind::Relu ? ActivationKind::Relu : ActivationKind::Sigmoid;
  head.hidden_w = Matrix(top.d_h, top.output_dim());
  head.hidden_b = Vector(top.d_h);
  head.out_w = Matrix(num_classes, top.d_h);
  head.out_b = Vector(num_classes);
  head.for_each_tensor([&](const TensorRef& t) { rng.fill_uniform(t.values, -range, range); });
  return model;
}

Model Model::zeros_like(const Model& other) {
  Model z = other;
  z.for_each_tensor([](int, const TensorRef& t) { std::fill(t.values.begin(), t.values.end(), 0.0); });
  return z;
}

std::vector<CellConfig> Model::configs() const {
  std::vector<CellConfig> out;
  for (const CellParams& p : layers) out.push_back(p.config);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](int, const ConstTensorRef& t) { n += t.values.size(); });
  return n;
}

std::vector<double> Model::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for_each_tensor(
      [&](int, const ConstTensorRef& t) { out.insert(out.end(), t.values.begin(), t.values.end()); });
  return out;
}

void Model::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw DimensionError("flat parameter vector has " + std::to_string(values.size()) +
                         " entries, model has " + std::to_string(parameter_count()));
  }
  std::size_t offset = 0;
  for_each_tensor([&](int, const TensorRef& t) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), t.values.size(),
                t.values.begin());
    offset += t.values.size();
  });
}

}  // namespace hornn
