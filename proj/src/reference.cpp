#include "hornn/reference.hpp"

#include <algorithm>
#include <cmath>

#include "hornn/errors.hpp"

namespace hornn {

namespace {

using R = long double;
using Vec = std::vector<R>;

R sig(R a) { return 1.0L / (1.0L + std::exp(-a)); }

R act(ActivationKind k, R a, R scale) {
  switch (k) {
    case ActivationKind::Sigmoid: return sig(a);
    case ActivationKind::Relu: return a > 0 ? a : 0;
    case ActivationKind::Tanh: return std::tanh(a);
    case ActivationKind::PSigmoid: return scale * sig(a);
  }
  return 0;
}

// out[r] += sum_c m(r, c) v[c] for rows [row0, row0 + rows).
void mv(const Matrix& m, const Vec& v, Vec& out, std::size_t row0 = 0) {
  for (std::size_t r = 0; r < out.size(); ++r) {
    R s = 0;
    for (std::size_t c = 0; c < v.size(); ++c) s += static_cast<R>(m(row0 + r, c)) * v[c];
    out[r] += s;
  }
}

Vec bias(const Vector& b, std::size_t from, std::size_t n) {
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = b[from + i];
  return out;
}

// Returns the layer outputs (p_t for projected kinds, else h_t).
std::vector<Vec> run_layer(const CellParams& p, const std::vector<Vec>& xs) {
  const CellConfig& c = p.config;
  const std::size_t d = c.d_h;
  const std::size_t T = xs.size();
  std::vector<Vec> h(T, Vec(d));
  std::vector<Vec> cell(T, Vec(d));
  std::vector<Vec> proj(T, Vec(c.d_p));
  const Vec zero_h(d);
  const Vec zero_p(c.d_p);
  const auto H = [&](std::size_t t, std::size_t lag) -> const Vec& { return t >= lag ? h[t - lag] : zero_h; };
  const auto P = [&](std::size_t t, std::size_t lag) -> const Vec& {
    return t >= lag ? proj[t - lag] : zero_p;
  };
  const auto C = [&](std::size_t t) -> const Vec& { return t >= 1 ? cell[t - 1] : zero_h; };
  const auto scale = [&](std::size_t j) -> R {
    return c.activation == ActivationKind::PSigmoid ? static_cast<R>(p.scale[j]) : 1.0L;
  };

  for (std::size_t t = 0; t < T; ++t) {
    switch (c.kind) {
      case CellKind::Rnn:
      case CellKind::HornnRelu:
      case CellKind::HornnSigmoid:
      case CellKind::HornnpRelu:
      case CellKind::HornnpSigmoid: {
        const bool projected = is_projected(c.kind);
        Vec a = bias(p.b, 0, d);
        mv(p.w, xs[t], a);
        mv(p.u, projected ? P(t, 1) : H(t, 1), a);
        if (is_high_order(c.kind)) mv(p.u_n, projected ? P(t, c.n) : H(t, c.n), a);
        if (has_shortcut(c.kind)) {
          for (std::size_t j = 0; j < d; ++j) a[j] += H(t, c.m)[j];
        }
        for (std::size_t j = 0; j < d; ++j) h[t][j] = act(c.activation, a[j], scale(j));
        break;
      }
      case CellKind::Lstm:
      case CellKind::Lstmp: {
        const Vec& rec = c.kind == CellKind::Lstmp ? P(t, 1) : H(t, 1);
        const Vec& cp = C(t);
        Vec gi = bias(p.b, 0, d), gf = bias(p.b, d, d), gc = bias(p.b, 2 * d, d), go = bias(p.b, 3 * d, d);
        Vec* gates[] = {&gi, &gf, &gc, &go};
        for (std::size_t g = 0; g < 4; ++g) {
          mv(p.w, xs[t], *gates[g], g * d);
          mv(p.u, rec, *gates[g], g * d);
        }
        for (std::size_t j = 0; j < d; ++j) {
          const R i = sig(gi[j] + static_cast<R>(p.peephole[j]) * cp[j]);
          const R f = sig(gf[j] + static_cast<R>(p.peephole[d + j]) * cp[j]);
          cell[t][j] = f * cp[j] + i * std::tanh(gc[j]);
          const R o = sig(go[j] + static_cast<R>(p.peephole[2 * d + j]) * cell[t][j]);
          h[t][j] = o * std::tanh(cell[t][j]);
        }
        break;
      }
      case CellKind::ResRnn: {
        Vec a1 = bias(p.b, 0, d);
        mv(p.w, xs[t], a1);
        mv(p.u, H(t, 1), a1);
        Vec inner(d);
        for (std::size_t j = 0; j < d; ++j) inner[j] = act(c.activation, a1[j], scale(j));
        Vec a2 = H(t, c.m);
        mv(p.u_d2, inner, a2);
        for (std::size_t j = 0; j < d; ++j) h[t][j] = act(c.activation, a2[j], scale(j));
        break;
      }
    }
    if (is_projected(c.kind)) mv(p.proj, h[t], proj[t]);
  }
  return is_projected(c.kind) ? proj : h;
}

}  // namespace

long double reference_loss(const Model& model, const SequenceBatch& batch) {
  if (batch.dim() != model.input_dim()) throw DimensionError("reference_loss: frame dim mismatch");
  std::vector<Vec> xs(batch.length(), Vec(batch.dim()));
  for (std::size_t t = 0; t < batch.length(); ++t) {
    for (std::size_t k = 0; k < batch.dim(); ++k) xs[t][k] = batch.frames(t, k);
  }
  for (const CellParams& layer : model.layers) xs = run_layer(layer, xs);

  const HeadParams& hp = model.head;
  R loss = 0;
  for (std::size_t t = 0; t < batch.length(); ++t) {
    if (batch.labels[t] == kNoLabel) continue;
    Vec hid = bias(hp.hidden_b, 0, hp.hidden_b.dim());
    mv(hp.hidden_w, xs[t], hid);
    for (R& v : hid) v = act(hp.activation, v, 1.0L);
    Vec z = bias(hp.out_b, 0, hp.out_b.dim());
    mv(hp.out_w, hid, z);
    const R mx = *std::max_element(z.begin(), z.end());
    R s = 0;
    for (R v : z) s += std::exp(v - mx);
    loss += std::log(s) + mx - z[static_cast<std::size_t>(batch.labels[t])];
  }
  return loss;
}

}  // namespace hornn
