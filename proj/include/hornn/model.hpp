#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "hornn/cells.hpp"

namespace hornn {

// Hidden layer of the top recurrent layer's d_h followed by a softmax output
// layer. The hidden layer uses ReLU on top of ReLU cells and sigmoid otherwise.
struct HeadParams {
  ActivationKind activation = ActivationKind::Sigmoid;
  Matrix hidden_w;  // d_h x (top layer output dim)
  Vector hidden_b;
  Matrix out_w;  // C x d_h
  Vector out_b;

  std::size_t num_classes() const { return out_w.rows(); }

  template <class F>
  void for_each_tensor(F&& f);
  template <class F>
  void for_each_tensor(F&& f) const;

  bool operator==(const HeadParams&) const = default;
};

// Throws ConfigError unless each layer's d_x equals the previous layer's
// output dim (d_p for projected kinds).
void validate_stack(std::span<const CellConfig> layers);

struct Model {
  std::vector<CellParams> layers;
  HeadParams head;

  static Model create(std::span<const CellConfig> layers, std::size_t num_classes,
                      std::uint64_t seed, double range = 0.05);
  static Model zeros_like(const Model& other);

  std::size_t input_dim() const { return layers.front().config.d_x; }
  std::size_t num_classes() const { return head.num_classes(); }
  std::vector<CellConfig> configs() const;

  // f(layer, tensor) over every tensor; layer is -1 for the head.
  template <class F>
  void for_each_tensor(F&& f);
  template <class F>
  void for_each_tensor(F&& f) const;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

  bool operator==(const Model&) const = default;
};

// ---------------------------------------------------------------------------

template <class Self, class F>
void visit_head_tensors(Self& self, F&& f) {
  auto mat = [&](std::string_view name, auto& m, TensorRole role) {
    f(BasicTensorRef<decltype(m.span())>{name, m.rows(), m.cols(), m.span(), role});
  };
  auto vec = [&](std::string_view name, auto& v, TensorRole role) {
    f(BasicTensorRef<decltype(v.span())>{name, v.dim(), 1, v.span(), role});
  };
  mat("W_hid", self.hidden_w, TensorRole::Weight);
  vec("b_hid", self.hidden_b, TensorRole::Bias);
  mat("W_out", self.out_w, TensorRole::Weight);
  vec("b_out", self.out_b, TensorRole::Bias);
}

template <class F>
void HeadParams::for_each_tensor(F&& f) {
  visit_head_tensors(*this, f);
}

template <class F>
void HeadParams::for_each_tensor(F&& f) const {
  visit_head_tensors(*this, f);
}

template <class F>
void Model::for_each_tensor(F&& f) {
  // Read-only visitors are routed to the const overload.
  if constexpr (!std::is_invocable_v<F&, int, const TensorRef&>) {
    std::as_const(*this).for_each_tensor(f);
  } else {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].for_each_tensor([&](const TensorRef& t) { f(static_cast<int>(i), t); });
    }
    head.for_each_tensor([&](const TensorRef& t) { f(-1, t); });
  }
}

template <class F>
void Model::for_each_tensor(F&& f) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].for_each_tensor([&](const ConstTensorRef& t) { f(static_cast<int>(i), t); });
  }
  head.for_each_tensor([&](const ConstTensorRef& t) { f(-1, t); });
}

}  // namespace hornn
