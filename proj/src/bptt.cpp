#include "hornn/bptt.hpp"

#include <algorithm>
#include <cmath>

#include "hornn/errors.hpp"

namespace hornn {

std::span<const double> LayerTrace::output(std::size_t t) const {
  const StepResult& s = steps[t];
  return s.p.empty() ? s.h.span() : s.p.span();
}

std::vector<Vector> rows_as_vectors(const Matrix& frames) {
  std::vector<Vector> out;
  out.reserve(frames.rows());
  for (std::size_t r = 0; r < frames.rows(); ++r) {
    auto row = frames.row(r);
    out.emplace_back(std::vector<double>(row.begin(), row.end()));
  }
  return out;
}

LayerTrace forward_layer(const CellParams& params, std::span<const Vector> inputs) {
  const CellConfig& c = params.config;
  const Vector zero_h(c.d_h);
  const Vector zero_p(c.d_p);
  LayerTrace trace;
  trace.steps.reserve(inputs.size());
  const auto hist = [&](std::size_t t, std::size_t lag) -> const StepResult* {
    return t >= lag ? &trace.steps[t - lag] : nullptr;
  };
  const auto h_at = [&](std::size_t t, std::size_t lag) {
    const StepResult* s = hist(t, lag);
    return s ? s->h.span() : zero_h.span();
  };
  const auto p_at = [&](std::size_t t, std::size_t lag) {
    const StepResult* s = hist(t, lag);
    return s ? s->p.span() : zero_p.span();
  };
  const auto c_at = [&](std::size_t t, std::size_t lag) {
    const StepResult* s = hist(t, lag);
    return s ? s->c.span() : zero_h.span();
  };

  for (std::size_t t = 0; t < inputs.size(); ++t) {
    StepContext ctx;
    ctx.x = inputs[t].span();
    ctx.h_prev = h_at(t, 1);
    if (is_high_order(c.kind)) ctx.h_lag_n = h_at(t, c.n);
    if (has_shortcut(c.kind)) ctx.h_lag_m = h_at(t, c.m);
    if (is_projected(c.kind)) {
      ctx.p_prev = p_at(t, 1);
      if (is_high_order(c.kind)) ctx.p_lag_n = p_at(t, c.n);
    }
    if (is_lstm(c.kind)) ctx.c_prev = c_at(t, 1);
    trace.steps.push_back(cell_step(params, ctx));
  }
  return trace;
}

namespace {

void run_head(const HeadParams& head, std::span<const double> input, HeadStep& out) {
  out.evaluated = true;
  out.hidden_a = head.hidden_b;
  gemv_acc(head.hidden_w, input, out.hidden_a.span());
  out.hidden = Vector(out.hidden_a.dim());
  activate_into(head.activation, {}, out.hidden_a.span(), out.hidden.span());
  out.logits = head.out_b;
  gemv_acc(head.out_w, out.hidden.span(), out.logits.span());
  const double mx = *std::max_element(out.logits.begin(), out.logits.end());
  out.probs = Vector(out.logits.dim());
  double z = 0.0;
  for (std::size_t k = 0; k < out.logits.dim(); ++k) {
    out.probs[k] = std::exp(out.logits[k] - mx);
    z += out.probs[k];
  }
  for (double& p : out.probs) p /= z;
}

// -log softmax(logits)[y], computed from the logits directly.
double cross_entropy(const Vector& logits, std::size_t y) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) + mx - logits[y];
}

}  // namespace

UnfoldedStates unfold_forward(const Model& model, const SequenceBatch& batch, bool all_frames) {
  if (model.layers.empty()) throw ConfigError("model has no recurrent layers");
  if (batch.dim() != model.input_dim()) {
    throw DimensionError("sequence '" + batch.utterance_id + "' has frame dim " +
                         std::to_string(batch.dim()) + ", model expects " +
                         std::to_string(model.input_dim()));
  }
  if (batch.labels.size() != batch.length()) {
    throw DimensionError("sequence '" + batch.utterance_id + "': label count mismatch");
  }
  UnfoldedStates st;
  st.frames = rows_as_vectors(batch.frames);
  st.layers.reserve(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (l == 0) {
      st.layers.push_back(forward_layer(model.layers[0], st.frames));
    } else {
      const LayerTrace& below = st.layers[l - 1];
      std::vector<Vector> in;
      in.reserve(below.length());
      for (std::size_t t = 0; t < below.length(); ++t) {
        auto o = below.output(t);
        in.emplace_back(std::vector<double>(o.begin(), o.end()));
      }
      st.layers.push_back(forward_layer(model.layers[l], in));
    }
  }

  const LayerTrace& top = st.layers.back();
  st.head.resize(batch.length());
  for (std::size_t t = 0; t < batch.length(); ++t) {
    const std::int32_t y = batch.labels[t];
    if (y == kNoLabel && !all_frames) continue;
    run_head(model.head, top.output(t), st.head[t]);
    if (y == kNoLabel) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes()) {
      throw ConfigError("label " + std::to_string(y) + " outside model's " +
                        std::to_string(model.num_classes()) + " classes");
    }
    const Vector& logits = st.head[t].logits;
    st.loss += cross_entropy(logits, static_cast<std::size_t>(y));
    const auto best = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    st.labeled += 1;
    st.correct += best == static_cast<std::size_t>(y) ? 1 : 0;
  }
  return st;
}

namespace {

struct Workspace {
  Vector fprime;
  Vector sig;
};

// dL/da = dL/dh * f'(a); accumulates the p-sigmoid scale gradient.
void activation_backward(const CellParams& p, CellParams& d, std::span<const double> a,
                         std::span<const double> dh, std::span<double> da, Workspace& ws) {
  const ActivationKind kind = p.config.activation;
  ws.fprime.resize(a.size());
  activate_grad_into(kind, p.scale.span(), a, ws.fprime.span());
  for (std::size_t j = 0; j < a.size(); ++j) da[j] = dh[j] * ws.fprime[j];
  if (kind == ActivationKind::PSigmoid) {
    for (std::size_t j = 0; j < a.size(); ++j) d.scale[j] += dh[j] * sigmoid(a[j]);
  }
}

}  // namespace

LayerGradients backward_layer(const CellParams& params, const LayerTrace& trace,
                              std::span<const Vector> inputs, std::span<const Vector> d_output) {
  const CellConfig& c = params.config;
  const std::size_t T = trace.length();
  if (inputs.size() != T || d_output.size() != T) {
    throw DimensionError("backward_layer: trace has " + std::to_string(T) + " steps, got " +
                         std::to_string(inputs.size()) + " inputs and " +
                         std::to_string(d_output.size()) + " output gradients");
  }
  const std::size_t d = c.d_h;
  const bool projected = is_projected(c.kind);
  const bool lstm = is_lstm(c.kind);

  LayerGradients g;
  g.d = CellParams::zeros(c);
  g.d_hidden.assign(T, Vector(d));
  g.d_pre.resize(T);
  g.d_input.assign(T, Vector(c.d_x));
  std::vector<Vector> d_proj(projected ? T : 0, Vector(c.d_p));
  std::vector<Vector> d_cell(lstm ? T : 0, Vector(d));
  Workspace ws;

  const Vector zero_c(d);
  const auto rec_state = [&](std::size_t t, std::size_t lag) -> const Vector* {
    if (t < lag) return nullptr;
    const StepResult& s = trace.steps[t - lag];
    return projected ? &s.p : &s.h;
  };
  const auto rec_grad = [&](std::size_t t, std::size_t lag) -> Vector* {
    if (t < lag) return nullptr;
    return projected ? &d_proj[t - lag] : &g.d_hidden[t - lag];
  };

  for (std::size_t t = T; t-- > 0;) {
    const StepResult& s = trace.steps[t];
    const Vector& x = inputs[t];
    Vector& dh = g.d_hidden[t];

    if (projected) {
      Vector& dp = d_proj[t];
      axpy(1.0, d_output[t].span(), dp.span());
      gemv_t_acc(params.proj, dp.span(), dh.span());
      outer_acc(g.d.proj, dp.span(), s.h.span());
    } else {
      axpy(1.0, d_output[t].span(), dh.span());
    }

    if (lstm) {
      const double* gi = s.gates.data();
      const double* gf = gi + d;
      const double* gc = gi + 2 * d;
      const double* go = gi + 3 * d;
      const double* vi = params.peephole.data();
      const double* vf = vi + d;
      const double* vo = vi + 2 * d;
      const Vector& c_prev = t > 0 ? trace.steps[t - 1].c : zero_c;
      Vector& da = g.d_pre[t];
      da = Vector(4 * d);
      Vector& dc = d_cell[t];
      for (std::size_t j = 0; j < d; ++j) {
        const double tc = std::tanh(s.c[j]);
        const double da_o = dh[j] * tc * go[j] * (1.0 - go[j]);
        const double dcj = dc[j] + dh[j] * go[j] * (1.0 - tc * tc) + vo[j] * da_o;
        const double da_i = dcj * gc[j] * gi[j] * (1.0 - gi[j]);
        const double da_f = dcj * c_prev[j] * gf[j] * (1.0 - gf[j]);
        const double da_c = dcj * gi[j] * (1.0 - gc[j] * gc[j]);
        da[j] = da_i;
        da[d + j] = da_f;
        da[2 * d + j] = da_c;
        da[3 * d + j] = da_o;
        g.d.peephole[j] += da_i * c_prev[j];
        g.d.peephole[d + j] += da_f * c_prev[j];
        g.d.peephole[2 * d + j] += da_o * s.c[j];
        if (t > 0) d_cell[t - 1][j] += dcj * gf[j] + vi[j] * da_i + vf[j] * da_f;
      }
      outer_acc(g.d.w, da.span(), x.span());
      axpy(1.0, da.span(), g.d.b.span());
      gemv_t_acc(params.w, da.span(), g.d_input[t].span());
      if (const Vector* prev = rec_state(t, 1)) {
        outer_acc(g.d.u, da.span(), prev->span());
        gemv_t_acc(params.u, da.span(), rec_grad(t, 1)->span());
      }
      continue;
    }

    if (c.kind == CellKind::ResRnn) {
      Vector& da = g.d_pre[t];
      da = Vector(d);
      activation_backward(params, g.d, s.a.span(), dh.span(), da.span(), ws);
      outer_acc(g.d.u_d2, da.span(), s.inner_h.span());
      Vector d_inner(d);
      gemv_t_acc(params.u_d2, da.span(), d_inner.span());
      Vector dz(d);
      activation_backward(params, g.d, s.inner_a.span(), d_inner.span(), dz.span(), ws);
      outer_acc(g.d.w, dz.span(), x.span());
      axpy(1.0, dz.span(), g.d.b.span());
      gemv_t_acc(params.w, dz.span(), g.d_input[t].span());
      if (t >= 1) {
        outer_acc(g.d.u, dz.span(), trace.steps[t - 1].h.span());
        gemv_t_acc(params.u, dz.span(), g.d_hidden[t - 1].span());
      }
      if (t >= c.m) axpy(1.0, da.span(), g.d_hidden[t - c.m].span());
      continue;
    }

    // Elman and high-order kinds share one pre-activation.
    Vector& da = g.d_pre[t];
    da = Vector(d);
    activation_backward(params, g.d, s.a.span(), dh.span(), da.span(), ws);
    outer_acc(g.d.w, da.span(), x.span());
    axpy(1.0, da.span(), g.d.b.span());
    gemv_t_acc(params.w, da.span(), g.d_input[t].span());
    if (const Vector* prev = rec_state(t, 1)) {
      outer_acc(g.d.u, da.span(), prev->span());
      gemv_t_acc(params.u, da.span(), rec_grad(t, 1)->span());
    }
    if (is_high_order(c.kind)) {
      if (const Vector* lagged = rec_state(t, c.n)) {
        outer_acc(g.d.u_n, da.span(), lagged->span());
        gemv_t_acc(params.u_n, da.span(), rec_grad(t, c.n)->span());
      }
    }
    if (has_shortcut(c.kind) && t >= c.m) axpy(1.0, da.span(), g.d_hidden[t - c.m].span());
  }

  if (c.freeze_scale && !g.d.scale.empty()) g.d.scale.fill(0.0);
  return g;
}

BackwardResult bptt_backward(const Model& model, const UnfoldedStates& states,
                             const SequenceBatch& batch) {
  const std::size_t T = batch.length();
  if (states.layers.size() != model.layers.size() || states.head.size() != T ||
      states.frames.size() != T) {
    throw DimensionError("bptt_backward: unfolded states do not match the batch");
  }
  BackwardResult out;
  out.grads.d = Model::zeros_like(model);
  const HeadParams& head = model.head;
  HeadParams& dhead = out.grads.d.head;
  const LayerTrace& top = states.layers.back();
  const std::size_t top_dim = model.layers.back().config.output_dim();

  std::vector<Vector> d_output(T, Vector(top_dim));
  std::size_t head_uses = 0;
  Vector d_hidden(head.hidden_b.dim());
  Vector fprime(head.hidden_b.dim());
  for (std::size_t t = 0; t < T; ++t) {
    const std::int32_t y = batch.labels[t];
    if (y == kNoLabel) continue;
    const HeadStep& hs = states.head[t];
    if (!hs.evaluated) throw DimensionError("bptt_backward: head was not evaluated at a labeled frame");
    ++head_uses;
    Vector d_logits = hs.probs;
    d_logits[static_cast<std::size_t>(y)] -= 1.0;
    outer_acc(dhead.out_w, d_logits.span(), hs.hidden.span());
    axpy(1.0, d_logits.span(), dhead.out_b.span());
    d_hidden.fill(0.0);
    gemv_t_acc(head.out_w, d_logits.span(), d_hidden.span());
    activate_grad_into(head.activation, {}, hs.hidden_a.span(), fprime.span());
    for (std::size_t j = 0; j < d_hidden.dim(); ++j) d_hidden[j] *= fprime[j];
    outer_acc(dhead.hidden_w, d_hidden.span(), top.output(t));
    axpy(1.0, d_hidden.span(), dhead.hidden_b.span());
    gemv_t_acc(head.hidden_w, d_hidden.span(), d_output[t].span());
  }

  out.layers.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    std::vector<Vector> inputs;
    if (l > 0) {
      const LayerTrace& below = states.layers[l - 1];
      inputs.reserve(T);
      for (std::size_t t = 0; t < T; ++t) {
        auto o = below.output(t);
        inputs.emplace_back(std::vector<double>(o.begin(), o.end()));
      }
    }
    const std::span<const Vector> in = l > 0 ? std::span<const Vector>(inputs) : states.frames;
    out.layers[l] = backward_layer(model.layers[l], states.layers[l], in, d_output);
    out.grads.d.layers[l] = out.layers[l].d;
    if (l > 0) d_output = out.layers[l].d_input;
  }
  out.grads.recurrent_sharing = std::max<std::size_t>(T, 1);
  out.grads.head_sharing = std::max<std::size_t>(head_uses, 1);
  return out;
}

void normalize_by_sharing(GradientSet& grads) {
  grads.d.for_each_tensor([&](int layer, const TensorRef& t) {
    const double n = layer < 0 ? static_cast<double>(grads.head_sharing)
                               : static_cast<double>(grads.recurrent_sharing);
    for (double& v : t.values) v /= n;
  });
  grads.recurrent_sharing = 1;
  grads.head_sharing = 1;
}

}  // namespace hornn
