#include "hornn/cells.hpp"

#include <algorithm>
#include <cmath>

#include "hornn/errors.hpp"

namespace hornn {

std::string to_string(CellKind kind) {
  switch (kind) {
    case CellKind::Rnn: return "rnn";
    case CellKind::Lstm: return "lstm";
    case CellKind::Lstmp: return "lstmp";
    case CellKind::HornnRelu: return "hornn_relu";
    case CellKind::HornnSigmoid: return "hornn_sigmoid";
    case CellKind::HornnpRelu: return "hornnp_relu";
    case CellKind::HornnpSigmoid: return "hornnp_sigmoid";
    case CellKind::ResRnn: return "resrnn";
  }
  return "unknown";
}

CellKind parse_cell_kind(std::string_view name) {
  std::string key(name);
  std::replace(key.begin(), key.end(), '-', '_');
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (key == "hornn") return CellKind::HornnRelu;
  if (key == "hornnp") return CellKind::HornnpRelu;
  if (key == "res_rnn") return CellKind::ResRnn;
  for (CellKind k : kAllCellKinds) {
    if (to_string(k) == key) return k;
  }
  throw ConfigError("unknown cell kind '" + std::string(name) + "'");
}

CellConfig CellConfig::make(CellKind kind, std::size_t d_x, std::size_t d_h, std::size_t d_p) {
  CellConfig c;
  c.kind = kind;
  c.d_x = d_x;
  c.d_h = d_h;
  c.d_p = is_projected(kind) ? d_p : 0;
  switch (kind) {
    case CellKind::HornnRelu:
    case CellKind::HornnpRelu:
      c.n = 4;
      c.activation = ActivationKind::Relu;
      break;
    case CellKind::HornnSigmoid:
    case CellKind::HornnpSigmoid:
      c.n = 2;
      c.m = 1;
      break;
    default:
      break;
  }
  return c;
}

void CellConfig::validate() const {
  const std::string who = to_string(kind) + ": ";
  if (d_x == 0 || d_h == 0) throw ConfigError(who + "d_x and d_h must be positive");
  if (is_projected(kind) && d_p == 0) throw ConfigError(who + "projected kinds need d_p > 0");
  if (!is_projected(kind) && d_p != 0) throw ConfigError(who + "d_p must be 0 for unprojected kinds");
  if (is_high_order(kind) && n < 2) throw ConfigError(who + "high-order lag n must be >= 2");
  if (has_shortcut(kind) && m < 1) throw ConfigError(who + "shortcut lag m must be >= 1");
  if (is_lstm(kind) && activation != ActivationKind::Sigmoid) {
    throw ConfigError(who + "LSTM gates use fixed nonlinearities; activation must be sigmoid");
  }
}

std::size_t CellConfig::max_lag() const {
  switch (kind) {
    case CellKind::HornnRelu:
    case CellKind::HornnpRelu:
      return n;
    case CellKind::HornnSigmoid:
    case CellKind::HornnpSigmoid:
      return std::max(n, m);
    case CellKind::ResRnn:
      return std::max<std::size_t>(m, 1);
    default:
      return 1;
  }
}

std::string_view tensor_name(CellKind kind, std::string_view slot) {
  const bool lstm = is_lstm(kind);
  if (slot == "w") return lstm ? "W_ifco" : "W";
  if (slot == "b") return lstm ? "b_ifco" : "b";
  if (slot == "u") {
    if (lstm) return kind == CellKind::Lstmp ? "U_pifco" : "U_ifco";
    if (kind == CellKind::Rnn) return "U";
    if (kind == CellKind::ResRnn) return "U_d1";
    return is_projected(kind) ? "U_p1" : "U_1";
  }
  if (slot == "u_n") return is_projected(kind) ? "U_pn" : "U_n";
  if (slot == "u_d2") return "U_d2";
  if (slot == "proj") return "P";
  if (slot == "peephole") return "V_ifo";
  if (slot == "scale") return "beta";
  return slot;
}

CellParams CellParams::zeros(const CellConfig& config) {
  config.validate();
  CellParams p;
  p.config = config;
  const std::size_t gates = is_lstm(config.kind) ? 4 : 1;
  const std::size_t rec_in = is_projected(config.kind) ? config.d_p : config.d_h;
  p.w = Matrix(gates * config.d_h, config.d_x);
  p.u = Matrix(gates * config.d_h, rec_in);
  p.b = Vector(gates * config.d_h);
  if (is_high_order(config.kind)) p.u_n = Matrix(config.d_h, rec_in);
  if (config.kind == CellKind::ResRnn) p.u_d2 = Matrix(config.d_h, config.d_h);
  if (is_projected(config.kind)) p.proj = Matrix(config.d_p, config.d_h);
  if (is_lstm(config.kind)) p.peephole = Vector(3 * config.d_h);
  if (config.activation == ActivationKind::PSigmoid) p.scale = Vector(config.d_h);
  return p;
}

CellParams CellParams::random(const CellConfig& config, Rng& rng, double range) {
  CellParams p = zeros(config);
  p.for_each_tensor([&](const TensorRef& t) {
    if (t.role == TensorRole::Scale) {
      std::fill(t.values.begin(), t.values.end(), 1.0);
    } else {
      rng.fill_uniform(t.values, -range, range);
    }
  });
  return p;
}

CellParams CellParams::random(const CellConfig& config, std::uint64_t seed, double range) {
  Rng rng(seed);
  return random(config, rng, range);
}

std::size_t CellParams::recurrent_param_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const ConstTensorRef& t) {
    if (t.role != TensorRole::Scale) n += t.values.size();
  });
  return n;
}

std::size_t CellParams::total_param_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const ConstTensorRef& t) { n += t.values.size(); });
  return n;
}

namespace {

void need(std::span<const double> v, std::size_t dim, const char* what, const CellParams& p) {
  if (v.size() != dim) {
    throw DimensionError(to_string(p.config.kind) + " step: " + what + " has dim " +
                         std::to_string(v.size()) + ", expected " + std::to_string(dim) +
                         (v.empty() ? " (history entries must be zero-filled, not omitted)" : ""));
  }
}

void lstm_forward(const CellParams& p, const StepContext& ctx, std::span<const double> rec_in,
                  StepResult& out) {
  const std::size_t d = p.config.d_h;
  need(ctx.c_prev, d, "c_{t-1}", p);
  out.a = p.b;
  gemv_acc(p.w, ctx.x, out.a.span());
  gemv_acc(p.u, rec_in, out.a.span());
  out.gates = Vector(4 * d);
  out.c = Vector(d);
  out.h = Vector(d);
  const double* vi = p.peephole.data();
  const double* vf = vi + d;
  const double* vo = vi + 2 * d;
  for (std::size_t j = 0; j < d; ++j) {
    out.a[j] += vi[j] * ctx.c_prev[j];
    out.a[d + j] += vf[j] * ctx.c_prev[j];
    const double i = sigmoid(out.a[j]);
    const double f = sigmoid(out.a[d + j]);
    const double cc = std::tanh(out.a[2 * d + j]);
    const double c = f * ctx.c_prev[j] + i * cc;
    out.a[3 * d + j] += vo[j] * c;
    const double o = sigmoid(out.a[3 * d + j]);
    out.gates[j] = i;
    out.gates[d + j] = f;
    out.gates[2 * d + j] = cc;
    out.gates[3 * d + j] = o;
    out.c[j] = c;
    out.h[j] = o * std::tanh(c);
  }
}

}  // namespace

StepResult cell_step(const CellParams& p, const StepContext& ctx) {
  const CellConfig& cfg = p.config;
  const std::size_t d = cfg.d_h;
  need(ctx.x, cfg.d_x, "x_t", p);
  StepResult out;
  auto activate_h = [&](const Vector& a) {
    Vector h(d);
    activate_into(cfg.activation, p.scale.span(), a.span(), h.span());
    return h;
  };
  auto project = [&](StepResult& r) {
    r.p = Vector(cfg.d_p);
    gemv_acc(p.proj, r.h.span(), r.p.span());
  };

  switch (cfg.kind) {
    case CellKind::Rnn:
      need(ctx.h_prev, d, "h_{t-1}", p);
      out.a = p.b;
      gemv_acc(p.w, ctx.x, out.a.span());
      gemv_acc(p.u, ctx.h_prev, out.a.span());
      out.h = activate_h(out.a);
      break;

    case CellKind::HornnRelu:
    case CellKind::HornnSigmoid:
      need(ctx.h_prev, d, "h_{t-1}", p);
      need(ctx.h_lag_n, d, "h_{t-n}", p);
      out.a = p.b;
      gemv_acc(p.w, ctx.x, out.a.span());
      gemv_acc(p.u, ctx.h_prev, out.a.span());
      gemv_acc(p.u_n, ctx.h_lag_n, out.a.span());
      if (cfg.kind == CellKind::HornnSigmoid) {
        need(ctx.h_lag_m, d, "h_{t-m}", p);
        axpy(1.0, ctx.h_lag_m, out.a.span());
      }
      out.h = activate_h(out.a);
      break;

    case CellKind::HornnpRelu:
    case CellKind::HornnpSigmoid:
      need(ctx.p_prev, cfg.d_p, "p_{t-1}", p);
      need(ctx.p_lag_n, cfg.d_p, "p_{t-n}", p);
      out.a = p.b;
      gemv_acc(p.w, ctx.x, out.a.span());
      gemv_acc(p.u, ctx.p_prev, out.a.span());
      gemv_acc(p.u_n, ctx.p_lag_n, out.a.span());
      if (cfg.kind == CellKind::HornnpSigmoid) {
        need(ctx.h_lag_m, d, "h_{t-m}", p);
        axpy(1.0, ctx.h_lag_m, out.a.span());
      }
      out.h = activate_h(out.a);
      project(out);
      break;

    case CellKind::Lstm:
      need(ctx.h_prev, d, "h_{t-1}", p);
      lstm_forward(p, ctx, ctx.h_prev, out);
      break;

    case CellKind::Lstmp:
      need(ctx.p_prev, cfg.d_p, "p_{t-1}", p);
      lstm_forward(p, ctx, ctx.p_prev, out);
      project(out);
      break;

    case CellKind::ResRnn:
      need(ctx.h_prev, d, "h_{t-1}", p);
      need(ctx.h_lag_m, d, "h_{t-m}", p);
      out.inner_a = p.b;
      gemv_acc(p.w, ctx.x, out.inner_a.span());
      gemv_acc(p.u, ctx.h_prev, out.inner_a.span());
      out.inner_h = activate_h(out.inner_a);
      out.a = Vector(std::vector<double>(ctx.h_lag_m.begin(), ctx.h_lag_m.end()));
      gemv_acc(p.u_d2, out.inner_h.span(), out.a.span());
      out.h = activate_h(out.a);
      break;
  }
  return out;
}

namespace {

void require_kind(const CellParams& p, std::initializer_list<CellKind> kinds, const char* op) {
  for (CellKind k : kinds) {
    if (p.config.kind == k) return;
  }
  throw ConfigError(std::string(op) + " called with cell kind " + to_string(p.config.kind));
}

}  // namespace

Vector rnn_step(const CellParams& params, const StepContext& ctx) {
  require_kind(params, {CellKind::Rnn}, "rnn_step");
  return cell_step(params, ctx).h;
}

Vector hornn_step(const CellParams& params, const StepContext& ctx) {
  require_kind(params, {CellKind::HornnRelu, CellKind::HornnSigmoid}, "hornn_step");
  return cell_step(params, ctx).h;
}

ProjectedStep hornnp_step(const CellParams& params, const StepContext& ctx) {
  require_kind(params, {CellKind::HornnpRelu, CellKind::HornnpSigmoid}, "hornnp_step");
  StepResult r = cell_step(params, ctx);
  return {std::move(r.h), std::move(r.p)};
}

LstmStep lstm_step(const CellParams& params, const StepContext& ctx) {
  require_kind(params, {CellKind::Lstm}, "lstm_step");
  StepResult r = cell_step(params, ctx);
  return {std::move(r.h), std::move(r.c)};
}

LstmpStep lstmp_step(const CellParams& params, const StepContext& ctx) {
  require_kind(params, {CellKind::Lstmp}, "lstmp_step");
  StepResult r = cell_step(params, ctx);
  return {std::move(r.h), std::move(r.c), std::move(r.p)};
}

Vector resrnn_step(const CellParams& params, const StepContext& ctx) {
  require_kind(params, {CellKind::ResRnn}, "resrnn_step");
  return cell_step(params, ctx).h;
}

}  // namespace hornn
