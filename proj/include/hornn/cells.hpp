#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "hornn/math.hpp"

namespace hornn {

enum class CellKind {
  Rnn,
  Lstm,
  Lstmp,
  HornnRelu,
  HornnSigmoid,
  HornnpRelu,
  HornnpSigmoid,
  ResRnn,
};

inline constexpr std::array<CellKind, 8> kAllCellKinds = {
    CellKind::Rnn,          CellKind::Lstm,       CellKind::Lstmp,
    CellKind::HornnRelu,    CellKind::HornnSigmoid, CellKind::HornnpRelu,
    CellKind::HornnpSigmoid, CellKind::ResRnn,
};

std::string to_string(CellKind kind);
// Accepts the canonical names plus "hornn"/"hornnp" (the ReLU structure) and
// dash-separated spellings.
CellKind parse_cell_kind(std::string_view name);

constexpr bool is_lstm(CellKind k) { return k == CellKind::Lstm || k == CellKind::Lstmp; }
constexpr bool is_projected(CellKind k) {
  return k == CellKind::Lstmp || k == CellKind::HornnpRelu || k == CellKind::HornnpSigmoid;
}
constexpr bool is_high_order(CellKind k) {
  return k == CellKind::HornnRelu || k == CellKind::HornnSigmoid || k == CellKind::HornnpRelu ||
         k == CellKind::HornnpSigmoid;
}
// Kinds that add the unweighted h_{t-m} term.
constexpr bool has_shortcut(CellKind k) {
  return k == CellKind::HornnSigmoid || k == CellKind::HornnpSigmoid || k == CellKind::ResRnn;
}

struct CellConfig {
  CellKind kind = CellKind::Rnn;
  std::size_t d_x = 0;
  std::size_t d_h = 0;
  std::size_t d_p = 0;  // 0 unless projected
  std::size_t n = 2;    // high-order lag
  std::size_t m = 1;    // shortcut lag
  ActivationKind activation = ActivationKind::Sigmoid;
  bool freeze_scale = false;  // keep the p-sigmoid scale fixed during training

  // Defaults: ReLU HORNNs use n=4, sigmoid HORNNs n=2 and m=1, ResRNN m=1.
  static CellConfig make(CellKind kind, std::size_t d_x, std::size_t d_h, std::size_t d_p = 0);

  void validate() const;
  std::size_t output_dim() const { return is_projected(kind) ? d_p : d_h; }
  // Largest history offset this cell reads.
  std::size_t max_lag() const;

  bool operator==(const CellConfig&) const = default;
};

enum class TensorRole { Weight, Bias, Scale };

template <class Span>
struct BasicTensorRef {
  std::string_view name;
  std::size_t rows;
  std::size_t cols;
  Span values;
  TensorRole role;
};
using TensorRef = BasicTensorRef<std::span<double>>;
using ConstTensorRef = BasicTensorRef<std::span<const double>>;

// Parameters of one recurrent layer. Slots not used by the kind stay empty.
// LSTM kinds stack their four gates row-wise in the order i, f, c, o, and the
// three diagonal peepholes as V_i, V_f, V_o.
struct CellParams {
  CellConfig config;
  Matrix w;         // W: input weights
  Matrix u;         // U, U_1, U_p1, U_d1 or the stacked U_* of an LSTM
  Vector b;         // bias
  Matrix u_n;       // U_n or U_pn
  Matrix u_d2;      // ResRNN second kernel layer
  Matrix proj;      // P (d_p x d_h)
  Vector peephole;  // V_i, V_f, V_o
  Vector scale;     // p-sigmoid scale; excluded from recurrent parameter counts

  static CellParams zeros(const CellConfig& config);
  // Every weight and bias uniform in [-range, range) from one stream seeded
  // with `seed`, visited in canonical order; the p-sigmoid scale starts at 1.
  static CellParams random(const CellConfig& config, std::uint64_t seed, double range = 0.05);
  static CellParams random(const CellConfig& config, Rng& rng, double range = 0.05);

  // Visit every non-empty tensor in canonical order: W, U, b, U_n, U_d2, P,
  // peepholes, scale.
  template <class F>
  void for_each_tensor(F&& f);
  template <class F>
  void for_each_tensor(F&& f) const;

  // Scalar elements excluding the p-sigmoid scale.
  std::size_t recurrent_param_count() const;
  std::size_t total_param_count() const;

  bool operator==(const CellParams&) const = default;
};

std::string_view tensor_name(CellKind kind, std::string_view slot);

// Inputs to one step. Histories outside the sequence must be passed as zero
// vectors (h_0 = 0); an empty span is treated as a missing entry.
struct StepContext {
  std::span<const double> x{};
  std::span<const double> h_prev{};   // h_{t-1}
  std::span<const double> h_lag_n{};  // h_{t-n}
  std::span<const double> h_lag_m{};  // h_{t-m}
  std::span<const double> p_prev{};   // P h_{t-1}
  std::span<const double> p_lag_n{};  // P h_{t-n}
  std::span<const double> c_prev{};   // c_{t-1}
};

// Everything one step produces, including intermediates kept for BPTT.
struct StepResult {
  Vector a;        // pre-activation; stacked gate pre-activations for LSTMs
  Vector h;
  Vector p;        // P h_t for projected kinds
  Vector c;        // LSTM cell state
  Vector gates;    // LSTM post-nonlinearity i, f, c~, o
  Vector inner_a;  // ResRNN first kernel layer pre-activation
  Vector inner_h;  // ResRNN first kernel layer output
};

StepResult cell_step(const CellParams& params, const StepContext& ctx);

struct ProjectedStep {
  Vector h;
  Vector p;
};
struct LstmStep {
  Vector h;
  Vector c;
};
struct LstmpStep {
  Vector h;
  Vector c;
  Vector p;
};

Vector rnn_step(const CellParams& params, const StepContext& ctx);
Vector hornn_step(const CellParams& params, const StepContext& ctx);
ProjectedStep hornnp_step(const CellParams& params, const StepContext& ctx);
LstmStep lstm_step(const CellParams& params, const StepContext& ctx);
LstmpStep lstmp_step(const CellParams& params, const StepContext& ctx);
Vector resrnn_step(const CellParams& params, const StepContext& ctx);

// ---------------------------------------------------------------------------

template <class Self, class F>
void visit_cell_tensors(Self& self, F&& f) {
  const CellKind kind = self.config.kind;
  auto mat = [&](std::string_view slot, auto& m, TensorRole role) {
    if (!m.empty()) f(BasicTensorRef<decltype(m.span())>{tensor_name(kind, slot), m.rows(),
                                                          m.cols(), m.span(), role});
  };
  auto vec = [&](std::string_view slot, auto& v, TensorRole role) {
    if (!v.empty())
      f(BasicTensorRef<decltype(v.span())>{tensor_name(kind, slot), v.dim(), 1, v.span(), role});
  };
  mat("w", self.w, TensorRole::Weight);
  mat("u", self.u, TensorRole::Weight);
  vec("b", self.b, TensorRole::Bias);
  mat("u_n", self.u_n, TensorRole::Weight);
  mat("u_d2", self.u_d2, TensorRole::Weight);
  mat("proj", self.proj, TensorRole::Weight);
  vec("peephole", self.peephole, TensorRole::Weight);
  vec("scale", self.scale, TensorRole::Scale);
}

template <class F>
void CellParams::for_each_tensor(F&& f) {
  visit_cell_tensors(*this, f);
}

template <class F>
void CellParams::for_each_tensor(F&& f) const {
  visit_cell_tensors(*this, f);
}

}  // namespace hornn
