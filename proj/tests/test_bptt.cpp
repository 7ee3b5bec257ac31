#include <doctest.h>

#include <cmath>

#include "hornn/bptt.hpp"
#include "hornn/errors.hpp"
#include "hornn/grad_lab.hpp"
#include "hornn/reference.hpp"

using namespace hornn;

namespace {

double sig(double a) { return 1.0 / (1.0 + std::exp(-a)); }
double dsig(double a) { return sig(a) * (1.0 - sig(a)); }

SequenceBatch scalar_batch(std::vector<double> xs, std::vector<std::int32_t> labels, std::size_t classes) {
  SequenceBatch b;
  const std::size_t T = xs.size();
  b.frames = Matrix(T, 1, std::move(xs));
  b.labels = std::move(labels);
  b.num_classes = classes;
  return b;
}

// Scalar model: one unit, a one-unit sigmoid hidden layer and two classes.
Model scalar_model(CellKind kind, std::size_t n) {
  CellConfig c = CellConfig::make(kind, 1, 1);
  c.activation = ActivationKind::Sigmoid;
  if (is_high_order(kind)) c.n = n;
  const CellConfig cells[] = {c};
  Model m = Model::create(cells, 2, 1);
  m.head.hidden_w(0, 0) = 1.3;
  m.head.hidden_b[0] = -0.2;
  m.head.out_w(0, 0) = 0.9;
  m.head.out_w(1, 0) = -1.1;
  m.head.out_b = Vector{0.05, -0.1};
  return m;
}

// dL_t/dh_t through the scalar head for label y.
double head_grad(const Model& m, double h, int y) {
  const double ha = m.head.hidden_w(0, 0) * h + m.head.hidden_b[0];
  const double hid = sig(ha);
  const double z0 = m.head.out_w(0, 0) * hid + m.head.out_b[0];
  const double z1 = m.head.out_w(1, 0) * hid + m.head.out_b[1];
  const double p1 = 1.0 / (1.0 + std::exp(z0 - z1));
  const double p0 = 1.0 - p1;
  const double d0 = p0 - (y == 0);
  const double d1 = p1 - (y == 1);
  const double dhid = d0 * m.head.out_w(0, 0) + d1 * m.head.out_w(1, 0);
  return dhid * dsig(ha) * m.head.hidden_w(0, 0);
}

}  // namespace

TEST_CASE("zero model gives a uniform softmax") {
  const CellConfig cells[] = {CellConfig::make(CellKind::Rnn, 3, 4)};
  Model m = Model::create(cells, 5, 1);
  m = Model::zeros_like(m);
  SequenceBatch b;
  b.frames = Matrix(1, 3, {0.3, -1.0, 2.0});
  b.labels = {2};
  b.num_classes = 5;
  const UnfoldedStates st = unfold_forward(m, b);
  for (double p : st.head[0].probs) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(st.loss == doctest::Approx(std::log(5.0)).epsilon(1e-15));
}

TEST_CASE("forward is deterministic") {
  for (CellKind kind : kAllCellKinds) {
    const CellConfig cells[] = {CellConfig::make(kind, 3, 4, is_projected(kind) ? 2 : 0)};
    const Model m = Model::create(cells, 3, 11, 0.3);
    SequenceBatch b;
    b.frames = seeded_uniform(9, 3, -1, 1, 2);
    b.labels.assign(9, 1);
    b.num_classes = 3;
    const UnfoldedStates a = unfold_forward(m, b);
    const UnfoldedStates c = unfold_forward(m, b);
    CHECK(a.loss == c.loss);
    for (std::size_t t = 0; t < 9; ++t) CHECK(a.head[t].logits == c.head[t].logits);
  }
}

TEST_CASE("hornn n=2 on three frames matches hand unrolling") {
  Model m = scalar_model(CellKind::HornnRelu, 2);
  CellParams& p = m.layers[0];
  p.w(0, 0) = 0.5;
  p.u(0, 0) = -0.4;
  p.u_n(0, 0) = 0.8;
  p.b[0] = 0.1;
  const SequenceBatch b = scalar_batch({1.0, -2.0, 0.5}, {0, 1, 0}, 2);
  const UnfoldedStates st = unfold_forward(m, b);
  const double h1 = sig(0.5 * 1.0 + 0.1);
  const double h2 = sig(0.5 * -2.0 - 0.4 * h1 + 0.1);
  const double h3 = sig(0.5 * 0.5 - 0.4 * h2 + 0.8 * h1 + 0.1);
  CHECK(st.layers[0].steps[0].h[0] == doctest::Approx(h1).epsilon(1e-15));
  CHECK(st.layers[0].steps[1].h[0] == doctest::Approx(h2).epsilon(1e-15));
  CHECK(st.layers[0].steps[2].h[0] == doctest::Approx(h3).epsilon(1e-15));
}

TEST_CASE("confident correct predictions give exactly zero gradient") {
  const CellConfig cells[] = {CellConfig::make(CellKind::HornnSigmoid, 3, 4)};
  Model m = Model::create(cells, 3, 5, 0.3);
  m.head.out_b = Vector{0.0, 2000.0, 0.0};
  SequenceBatch b;
  b.frames = seeded_uniform(6, 3, -1, 1, 4);
  b.labels.assign(6, 1);
  b.num_classes = 3;
  const UnfoldedStates st = unfold_forward(m, b);
  CHECK(st.loss == 0.0);
  const BackwardResult back = bptt_backward(m, st, b);
  back.grads.d.for_each_tensor([](int, const ConstTensorRef& t) {
    for (double v : t.values) CHECK(v == 0.0);
  });
}

TEST_CASE("scalar rnn over two frames matches the hand derivation") {
  Model m = scalar_model(CellKind::Rnn, 0);
  CellParams& p = m.layers[0];
  p.w(0, 0) = 0.7;
  p.u(0, 0) = -1.2;
  p.b[0] = 0.3;
  const double x1 = 0.8, x2 = -0.5;
  const SequenceBatch b = scalar_batch({x1, x2}, {1, 0}, 2);

  const double a1 = 0.7 * x1 + 0.3;
  const double h1 = sig(a1);
  const double a2 = 0.7 * x2 - 1.2 * h1 + 0.3;
  const double h2 = sig(a2);
  const double d2 = head_grad(m, h2, 0);
  const double da2 = d2 * dsig(a2);
  const double d1 = head_grad(m, h1, 1) + da2 * -1.2;
  const double da1 = d1 * dsig(a1);

  const UnfoldedStates st = unfold_forward(m, b);
  const BackwardResult back = bptt_backward(m, st, b);
  const CellParams& g = back.grads.d.layers[0];
  CHECK(std::abs(g.u(0, 0) - da2 * h1) < 1e-12);
  CHECK(std::abs(g.w(0, 0) - (da1 * x1 + da2 * x2)) < 1e-12);
  CHECK(std::abs(g.b[0] - (da1 + da2)) < 1e-12);
  CHECK(std::abs(back.layers[0].d_hidden[0][0] - d1) < 1e-12);
}

TEST_CASE("hornn n=2 on four frames: dF/dh_1 is the sum over both backward paths") {
  Model m = scalar_model(CellKind::HornnRelu, 2);
  CellParams& p = m.layers[0];
  p.w(0, 0) = 0.6;
  p.u(0, 0) = 0.9;
  p.u_n(0, 0) = -0.7;
  p.b[0] = -0.1;
  const std::vector<double> x{0.5, -1.0, 1.5, 0.2};
  const std::vector<std::int32_t> y{1, 0, 0, 1};
  const SequenceBatch b = scalar_batch(x, y, 2);

  double a[4], h[4];
  for (int t = 0; t < 4; ++t) {
    a[t] = 0.6 * x[t] - 0.1 + (t >= 1 ? 0.9 * h[t - 1] : 0.0) + (t >= 2 ? -0.7 * h[t - 2] : 0.0);
    h[t] = sig(a[t]);
  }
  double e[4];
  for (int t = 0; t < 4; ++t) e[t] = head_grad(m, h[t], y[t]);
  // Total derivatives from the last frame backwards.
  const double D4 = e[3];
  const double D3 = e[2] + D4 * dsig(a[3]) * 0.9;
  const double D2 = e[1] + D3 * dsig(a[2]) * 0.9 + D4 * dsig(a[3]) * -0.7;
  const double via_h2 = D2 * dsig(a[1]) * 0.9;
  const double via_h3 = D3 * dsig(a[2]) * -0.7;
  const double D1 = e[0] + via_h2 + via_h3;

  const UnfoldedStates st = unfold_forward(m, b);
  const BackwardResult back = bptt_backward(m, st, b);
  CHECK(std::abs(back.layers[0].d_hidden[0][0] - D1) < 1e-12);
  // The lag-2 path must be far above the tolerance for the check to mean anything.
  CHECK(std::abs(via_h3) > 1e-8);
}

TEST_CASE("sharing normalisation: accumulate then divide equals the per-step average") {
  const CellConfig cells[] = {CellConfig::make(CellKind::Rnn, 3, 4)};
  const Model m = Model::create(cells, 3, 9, 0.5);
  for (std::size_t T : {16u, 20u}) {
    SequenceBatch b;
    b.frames = seeded_uniform(T, 3, -1, 1, T);
    b.labels.assign(T, 2);
    b.labels[3] = kNoLabel;
    b.num_classes = 3;
    const UnfoldedStates st = unfold_forward(m, b);
    BackwardResult back = bptt_backward(m, st, b);
    CHECK(back.grads.recurrent_sharing == T);
    CHECK(back.grads.head_sharing == T - 1);
    const Model raw = back.grads.d;
    normalize_by_sharing(back.grads);

    // Per-step U gradients rebuilt from dL/da_t, then averaged.
    const LayerGradients& lg = back.layers[0];
    Matrix avg(4, 4);
    for (std::size_t t = 1; t < T; ++t) {
      Matrix step(4, 4);
      outer_acc(step, lg.d_pre[t].span(), st.layers[0].steps[t - 1].h.span());
      for (std::size_t i = 0; i < 16; ++i) avg.span()[i] += step.span()[i] / static_cast<double>(T);
    }
    for (std::size_t i = 0; i < 16; ++i) {
      const double got = back.grads.d.layers[0].u.span()[i];
      CHECK(got == raw.layers[0].u.span()[i] / static_cast<double>(T));
      CHECK(std::abs(got - avg.span()[i]) <= 1e-14 * std::max(1.0, std::abs(got)));
    }
    for (std::size_t i = 0; i < raw.head.out_w.size(); ++i) {
      CHECK(back.grads.d.head.out_w.span()[i] == raw.head.out_w.span()[i] / static_cast<double>(T - 1));
    }
  }
}

TEST_CASE("production forward agrees with the extended-precision reference") {
  for (CellKind kind : kAllCellKinds) {
    CellConfig c = CellConfig::make(kind, 3, 4, is_projected(kind) ? 2 : 0);
    if (kind == CellKind::ResRnn) c.activation = ActivationKind::PSigmoid;
    const CellConfig second = CellConfig::make(CellKind::HornnSigmoid, c.output_dim(), 3);
    const CellConfig cells[] = {c, second};
    Model m = Model::create(cells, 3, 4, 0.5);
    SequenceBatch b;
    b.frames = seeded_uniform(11, 3, -1, 1, 6);
    b.labels = {0, 1, 2, kNoLabel, 1, 0, 2, 2, 1, 0, 1};
    b.num_classes = 3;
    const double prod = unfold_forward(m, b).loss;
    const long double ref = reference_loss(m, b);
    CHECK(std::abs(static_cast<long double>(prod) - ref) / ref < 1e-14L);
  }
}

TEST_CASE("two-layer gradients match central differences") {
  const CellConfig cells[] = {CellConfig::make(CellKind::HornnpSigmoid, 2, 3, 2),
                              CellConfig::make(CellKind::Lstm, 2, 3)};
  Model m = Model::create(cells, 3, 2, 0.5);
  SequenceBatch b;
  b.frames = seeded_uniform(7, 2, -1, 1, 3);
  b.labels = {0, 2, 1, 1, kNoLabel, 0, 2};
  b.num_classes = 3;
  const BackwardResult back = bptt_backward(m, unfold_forward(m, b), b);
  std::vector<double> analytic;
  back.grads.d.for_each_tensor([&](int, const ConstTensorRef& t) {
    analytic.insert(analytic.end(), t.values.begin(), t.values.end());
  });
  std::vector<double> flat = m.flatten();
  REQUIRE(flat.size() == analytic.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + 1e-5;
    m.assign_flat(flat);
    const long double up = reference_loss(m, b);
    flat[i] = saved - 1e-5;
    m.assign_flat(flat);
    const long double down = reference_loss(m, b);
    flat[i] = saved;
    const double num = static_cast<double>((up - down) / 2e-5L);
    worst = std::max(worst, std::abs(analytic[i] - num) / std::max(std::abs(num), 1e-8));
  }
  m.assign_flat(flat);
  CHECK(worst < 1e-6);
}

TEST_CASE("every cell kind passes the finite-difference oracle") {
  for (CellKind kind : kAllCellKinds) {
    GradCheckOptions o;
    o.cell = CellConfig::make(kind, 3, 4, is_projected(kind) ? 2 : 0);
    const GradCheckResult r = finite_diff_check(o);
    INFO(to_string(kind), " worst ", r.worst_tensor, "[", r.worst_index, "]");
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.forward_mismatch < 1e-13);
  }
}

TEST_CASE("one tiny step along the negative gradient lowers the loss to first order") {
  const CellConfig cells[] = {CellConfig::make(CellKind::HornnSigmoid, 3, 4)};
  Model m = Model::create(cells, 3, 12, 0.5);
  SequenceBatch b;
  b.frames = seeded_uniform(10, 3, -1, 1, 12);
  b.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  b.num_classes = 3;
  const long double before = reference_loss(m, b);
  const BackwardResult back = bptt_backward(m, unfold_forward(m, b), b);
  double sq = 0.0;
  std::vector<double> g;
  back.grads.d.for_each_tensor([&](int, const ConstTensorRef& t) {
    for (double v : t.values) {
      g.push_back(v);
      sq += v * v;
    }
  });
  const double lr = 1e-8;
  std::vector<double> flat = m.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= lr * g[i];
  m.assign_flat(flat);
  const long double after = reference_loss(m, b);
  CHECK(after < before);
  CHECK(std::abs(static_cast<double>(after - before) + lr * sq) < 1e-10);
}

TEST_CASE("mismatched states are rejected") {
  const CellConfig cells[] = {CellConfig::make(CellKind::Rnn, 2, 3)};
  const Model m = Model::create(cells, 2, 1);
  SequenceBatch b;
  b.frames = Matrix(4, 2);
  b.labels.assign(4, 0);
  b.num_classes = 2;
  const UnfoldedStates st = unfold_forward(m, b);
  SequenceBatch shorter = b;
  shorter.frames = Matrix(3, 2);
  shorter.labels.assign(3, 0);
  CHECK_THROWS_AS(bptt_backward(m, st, shorter), DimensionError);
  SequenceBatch wide;
  wide.frames = Matrix(4, 3);
  wide.labels.assign(4, 0);
  wide.num_classes = 2;
  CHECK_THROWS_AS(unfold_forward(m, wide), DimensionError);
}
