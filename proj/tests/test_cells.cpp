#include <doctest.h>

#include <cmath>

#include "hornn/bptt.hpp"
#include "hornn/cells.hpp"
#include "hornn/cost_model.hpp"
#include "hornn/errors.hpp"

using namespace hornn;

namespace {

using Vec = std::vector<double>;

CellParams scalar(CellKind kind, ActivationKind act) {
  CellConfig c = CellConfig::make(kind, 1, 1, is_projected(kind) ? 1 : 0);
  c.activation = act;
  return CellParams::zeros(c);
}

void copy_into(Matrix& dst, const Matrix& src) {
  REQUIRE(dst.rows() == src.rows());
  REQUIRE(dst.cols() == src.cols());
  dst = src;
}

}  // namespace

TEST_CASE("rnn step hand cases") {
  CellParams p = scalar(CellKind::Rnn, ActivationKind::Sigmoid);
  p.w(0, 0) = 1.0;
  const Vec zero{0.0}, one{1.0};
  CHECK(rnn_step(p, {.x = zero, .h_prev = zero}) == Vector{0.5});

  p.u(0, 0) = 1.0;
  p.b[0] = -2.0;
  CHECK(rnn_step(p, {.x = one, .h_prev = one}) == Vector{0.5});

  CellParams r = scalar(CellKind::Rnn, ActivationKind::Relu);
  r.b[0] = -3.0;
  CHECK(rnn_step(r, {.x = zero, .h_prev = zero}) == Vector{0.0});
}

TEST_CASE("hornn step hand cases") {
  CellParams p = scalar(CellKind::HornnRelu, ActivationKind::Relu);
  p.w(0, 0) = p.u(0, 0) = p.u_n(0, 0) = 1.0;
  const Vec x{1.0}, h1{2.0}, hn{3.0};
  CHECK(hornn_step(p, {.x = x, .h_prev = h1, .h_lag_n = hn}) == Vector{6.0});

  CellParams s = CellParams::zeros(CellConfig::make(CellKind::HornnSigmoid, 3, 4));
  const Vec z3(3, 0.0), z4(4, 0.0);
  CHECK(hornn_step(s, {.x = z3, .h_prev = z4, .h_lag_n = z4, .h_lag_m = z4}) == Vector(4, 0.5));
}

TEST_CASE("sigmoid hornn adds h_{t-m} unweighted") {
  CellParams s = scalar(CellKind::HornnSigmoid, ActivationKind::Sigmoid);
  const Vec zero{0.0}, hm{0.7};
  CHECK(hornn_step(s, {.x = zero, .h_prev = zero, .h_lag_n = zero, .h_lag_m = hm}) ==
        Vector{sigmoid(0.7)});
}

TEST_CASE("missing history is an error, not an implicit zero") {
  CellParams p = CellParams::zeros(CellConfig::make(CellKind::HornnRelu, 2, 3));
  const Vec x(2, 0.0), h(3, 0.0);
  CHECK_THROWS_AS(hornn_step(p, {.x = x, .h_prev = h}), DimensionError);
  CHECK_THROWS_AS(rnn_step(p, {.x = x, .h_prev = h}), ConfigError);
}

TEST_CASE("hornn with U_n = 0 reduces to rnn bit for bit") {
  for (CellKind kind : {CellKind::HornnRelu, CellKind::HornnSigmoid}) {
    for (ActivationKind act : {ActivationKind::Relu, ActivationKind::Sigmoid}) {
      CellConfig hc = CellConfig::make(kind, 3, 5);
      hc.activation = act;
      CellParams hp = CellParams::random(hc, 17, 0.8);
      hp.u_n = Matrix(5, 5);
      CellConfig rc = CellConfig::make(CellKind::Rnn, 3, 5);
      rc.activation = act;
      CellParams rp = CellParams::zeros(rc);
      rp.w = hp.w;
      rp.u = hp.u;
      rp.b = hp.b;

      Rng rng(4);
      Vec x(3), h(5), hn(5), zero(5, 0.0);
      rng.fill_uniform(x, -1, 1);
      rng.fill_uniform(h, -1, 1);
      rng.fill_uniform(hn, -1, 1);
      CHECK(hornn_step(hp, {.x = x, .h_prev = h, .h_lag_n = hn, .h_lag_m = zero}) ==
            rnn_step(rp, {.x = x, .h_prev = h}));
    }
  }
}

TEST_CASE("hornnp step hand cases and projection collapse") {
  CellParams p = scalar(CellKind::HornnpRelu, ActivationKind::Relu);
  p.proj(0, 0) = 2.0;
  p.u(0, 0) = 1.0;
  const Vec zero{0.0};
  // p_{t-1} = P h_{t-1} = 2.
  const Vec p_prev{2.0};
  const ProjectedStep r = hornnp_step(p, {.x = zero, .p_prev = p_prev, .p_lag_n = zero});
  CHECK(r.h == Vector{2.0});
  CHECK(r.p == Vector{4.0});

  CellParams s = CellParams::random(CellConfig::make(CellKind::HornnpSigmoid, 3, 4, 2), 5, 0.5);
  const Vec x{0.3, -0.2, 0.9}, z2(2, 0.0), z4(4, 0.0);
  const ProjectedStep q = hornnp_step(s, {.x = x, .h_lag_m = z4, .p_prev = z2, .p_lag_n = z2});
  for (std::size_t j = 0; j < 4; ++j) {
    double a = s.b[j];
    for (std::size_t k = 0; k < 3; ++k) a += s.w(j, k) * x[k];
    CHECK(q.h[j] == doctest::Approx(sigmoid(a)).epsilon(1e-15));
  }

  for (CellKind kind : {CellKind::HornnpRelu, CellKind::HornnpSigmoid}) {
    const CellKind flat = kind == CellKind::HornnpRelu ? CellKind::HornnRelu : CellKind::HornnSigmoid;
    CellParams hp = CellParams::random(CellConfig::make(flat, 3, 4), 8, 0.5);
    CellParams pp = CellParams::zeros(CellConfig::make(kind, 3, 4, 4));
    pp.w = hp.w;
    pp.b = hp.b;
    copy_into(pp.u, hp.u);
    copy_into(pp.u_n, hp.u_n);
    pp.proj = Matrix::identity(4);

    Rng rng(2);
    Vec xs(3), h1(4), hn(4), hm(4);
    for (Vec* v : {&xs, &h1, &hn, &hm}) rng.fill_uniform(*v, -1, 1);
    const Vector ref = hornn_step(hp, {.x = xs, .h_prev = h1, .h_lag_n = hn, .h_lag_m = hm});
    const ProjectedStep got = hornnp_step(pp, {.x = xs, .h_lag_m = hm, .p_prev = h1, .p_lag_n = hn});
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(got.h[j] - ref[j]) < 1e-12);
      CHECK(std::abs(got.p[j] - ref[j]) < 1e-12);
    }
  }
}

TEST_CASE("lstm step hand cases") {
  CellParams p = CellParams::zeros(CellConfig::make(CellKind::Lstm, 2, 3));
  const Vec x(2, 0.0), h(3, 0.0), c0(3, 0.0), c1(3, 1.0);
  LstmStep r = lstm_step(p, {.x = x, .h_prev = h, .c_prev = c0});
  CHECK(r.c == Vector(3, 0.0));
  CHECK(r.h == Vector(3, 0.0));
  const StepResult full = cell_step(p, {.x = x, .h_prev = h, .c_prev = c0});
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(full.gates[j] == 0.5);
    CHECK(full.gates[3 + j] == 0.5);
    CHECK(full.gates[6 + j] == 0.0);
    CHECK(full.gates[9 + j] == 0.5);
  }

  r = lstm_step(p, {.x = x, .h_prev = h, .c_prev = c1});
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(r.c[j] == 0.5);
    CHECK(r.h[j] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
  }
}

TEST_CASE("lstm forget bias limit keeps the previous cell") {
  CellParams p = CellParams::random(CellConfig::make(CellKind::Lstm, 2, 3), 3, 0.5);
  for (std::size_t j = 0; j < 3; ++j) p.b[3 + j] = 50.0;
  const Vec x{0.4, -0.7}, h{0.1, 0.2, -0.3}, c{0.5, -1.0, 2.0};
  const StepResult r = cell_step(p, {.x = x, .h_prev = h, .c_prev = c});
  for (std::size_t j = 0; j < 3; ++j) {
    const double i = r.gates[j];
    const double cc = r.gates[6 + j];
    CHECK(std::abs(r.c[j] - (c[j] + i * cc)) < 1e-9);
  }
}

TEST_CASE("lstm peepholes: i and f see c_{t-1}, o sees c_t") {
  CellParams p = CellParams::zeros(CellConfig::make(CellKind::Lstm, 1, 1));
  p.peephole = Vector{1.0, 2.0, 3.0};
  p.b = Vector{0.0, 0.0, 0.4, 0.0};
  const Vec x{0.0}, h{0.0}, c{0.6};
  const StepResult r = cell_step(p, {.x = x, .h_prev = h, .c_prev = c});
  const double i = sigmoid(1.0 * 0.6);
  const double f = sigmoid(2.0 * 0.6);
  const double ct = f * 0.6 + i * std::tanh(0.4);
  const double o = sigmoid(3.0 * ct);
  CHECK(r.c[0] == doctest::Approx(ct).epsilon(1e-15));
  CHECK(r.h[0] == doctest::Approx(o * std::tanh(ct)).epsilon(1e-15));
}

TEST_CASE("lstmp collapses to lstm and counts like the cost model") {
  CellParams lp = CellParams::random(CellConfig::make(CellKind::Lstm, 3, 4), 6, 0.5);
  CellParams pp = CellParams::zeros(CellConfig::make(CellKind::Lstmp, 3, 4, 4));
  pp.w = lp.w;
  pp.b = lp.b;
  pp.peephole = lp.peephole;
  copy_into(pp.u, lp.u);
  pp.proj = Matrix::identity(4);
  Rng rng(8);
  Vec x(3), h(4), c(4);
  for (Vec* v : {&x, &h, &c}) rng.fill_uniform(*v, -1, 1);
  const LstmStep ref = lstm_step(lp, {.x = x, .h_prev = h, .c_prev = c});
  const LstmpStep got = lstmp_step(pp, {.x = x, .p_prev = h, .c_prev = c});
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(std::abs(got.h[j] - ref.h[j]) < 1e-12);
    CHECK(std::abs(got.c[j] - ref.c[j]) < 1e-12);
    CHECK(std::abs(got.p[j] - ref.h[j]) < 1e-12);
  }

  const CellParams zero = CellParams::zeros(CellConfig::make(CellKind::Lstmp, 3, 5, 2));
  const Vec z2(2, 0.0), z5(5, 0.0);
  const LstmpStep zs = lstmp_step(zero, {.x = x, .p_prev = z2, .c_prev = z5});
  CHECK(zs.h == Vector(5, 0.0));

  for (const CellConfig& cfg : {CellConfig::make(CellKind::Lstmp, 80, 500, 250),
                                CellConfig::make(CellKind::Lstmp, 7, 9, 3)}) {
    CHECK(CellParams::zeros(cfg).recurrent_param_count() == param_count(cfg));
  }
}

TEST_CASE("resrnn step hand cases") {
  CellParams p = scalar(CellKind::ResRnn, ActivationKind::Relu);
  p.u_d2(0, 0) = 1.0;
  p.w(0, 0) = 1.0;
  const Vec x{123.5}, zero{0.0};
  CHECK(resrnn_step(p, {.x = x, .h_prev = zero, .h_lag_m = zero}) == Vector{123.5});

  CellParams s = CellParams::random(CellConfig::make(CellKind::ResRnn, 2, 3), 9, 0.5);
  for (double& v : s.w.span()) v = 0.0;
  for (double& v : s.u.span()) v = 0.0;
  s.b.fill(0.0);
  const Vec x2{1.0, -1.0}, h3(3, 0.0);
  const Vector got = resrnn_step(s, {.x = x2, .h_prev = h3, .h_lag_m = h3});
  for (std::size_t j = 0; j < 3; ++j) {
    double a = 0.0;
    for (std::size_t k = 0; k < 3; ++k) a += s.u_d2(j, k) * 0.5;
    CHECK(got[j] == doctest::Approx(sigmoid(a)).epsilon(1e-15));
  }
}

TEST_CASE("resrnn shortcut shifts the outer pre-activation") {
  CellParams p = CellParams::random(CellConfig::make(CellKind::ResRnn, 2, 3), 10, 0.5);
  const Vec x{0.2, 0.4}, h{0.1, -0.1, 0.3}, zero(3, 0.0), delta{0.5, -0.25, 1.0};
  const StepResult base = cell_step(p, {.x = x, .h_prev = h, .h_lag_m = zero});
  const StepResult shifted = cell_step(p, {.x = x, .h_prev = h, .h_lag_m = delta});
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(shifted.a[j] == base.a[j] + delta[j]);
    CHECK(shifted.h[j] == sigmoid(base.a[j] + delta[j]));
  }
}

TEST_CASE("steps are pure") {
  for (CellKind kind : kAllCellKinds) {
    const CellConfig cfg = CellConfig::make(kind, 3, 4, is_projected(kind) ? 2 : 0);
    const CellParams p = CellParams::random(cfg, 3, 0.5);
    const CellParams before = p;
    const Vec x{0.1, 0.2, 0.3}, h(4, 0.25), pr(2, 0.5), c(4, -0.5);
    const StepContext ctx{.x = x, .h_prev = h, .h_lag_n = h, .h_lag_m = h, .p_prev = pr, .p_lag_n = pr,
                          .c_prev = c};
    const StepResult a = cell_step(p, ctx);
    const StepResult b = cell_step(p, ctx);
    CHECK(a.h == b.h);
    CHECK(a.p == b.p);
    CHECK(a.c == b.c);
    CHECK(p == before);
  }
}

TEST_CASE("zero history before the window: early steps match a lag-free rnn") {
  CellConfig hc = CellConfig::make(CellKind::HornnRelu, 2, 3);
  REQUIRE(hc.n == 4);
  CellParams hp = CellParams::random(hc, 21, 0.5);
  CellParams rp = CellParams::zeros(CellConfig::make(CellKind::Rnn, 2, 3));
  rp.config.activation = ActivationKind::Relu;
  rp.w = hp.w;
  rp.u = hp.u;
  rp.b = hp.b;
  std::vector<Vector> xs;
  Rng rng(1);
  for (int t = 0; t < 6; ++t) {
    Vector x(2);
    rng.fill_uniform(x.span(), -1, 1);
    xs.push_back(x);
  }
  const LayerTrace th = forward_layer(hp, xs);
  const LayerTrace tr = forward_layer(rp, xs);
  for (std::size_t t = 0; t < 4; ++t) CHECK(th.steps[t].h == tr.steps[t].h);
  CHECK_FALSE(th.steps[4].h == tr.steps[4].h);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(CellConfig::make(CellKind::Lstmp, 3, 4, 0).validate(), ConfigError);
  CellConfig c = CellConfig::make(CellKind::Rnn, 3, 4);
  c.d_p = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = CellConfig::make(CellKind::HornnRelu, 3, 4);
  c.n = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = CellConfig::make(CellKind::HornnSigmoid, 3, 4);
  c.m = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(CellConfig::make(CellKind::Rnn, 0, 4).validate(), ConfigError);

  CHECK(CellConfig::make(CellKind::HornnRelu, 1, 1).n == 4);
  CHECK(CellConfig::make(CellKind::HornnSigmoid, 1, 1).n == 2);
  CHECK(CellConfig::make(CellKind::HornnSigmoid, 1, 1).m == 1);
  CHECK(CellConfig::make(CellKind::ResRnn, 1, 1).m == 1);
  CHECK(parse_cell_kind("hornnp") == CellKind::HornnpRelu);
  CHECK(parse_cell_kind("hornn-sigmoid") == CellKind::HornnSigmoid);
  CHECK_THROWS_AS(parse_cell_kind("gru"), ConfigError);
  for (CellKind k : kAllCellKinds) CHECK(parse_cell_kind(to_string(k)) == k);
}

TEST_CASE("parameter shapes and initialisation") {
  const CellParams p = CellParams::random(CellConfig::make(CellKind::Lstmp, 3, 4, 2), 1);
  CHECK(p.w.shape() == Matrix(16, 3).shape());
  CHECK(p.u.shape() == Matrix(16, 2).shape());
  CHECK(p.proj.shape() == Matrix(2, 4).shape());
  CHECK(p.peephole.dim() == 12);
  CHECK(p.b.dim() == 16);
  p.for_each_tensor([](const ConstTensorRef& t) {
    for (double v : t.values) {
      CHECK(v >= -0.05);
      CHECK(v < 0.05);
    }
  });
  CHECK(CellParams::random(CellConfig::make(CellKind::Lstmp, 3, 4, 2), 1) == p);

  CellConfig ps = CellConfig::make(CellKind::HornnSigmoid, 2, 3);
  ps.activation = ActivationKind::PSigmoid;
  const CellParams q = CellParams::random(ps, 2);
  CHECK(q.scale == Vector(3, 1.0));
  CHECK(q.total_param_count() == q.recurrent_param_count() + 3);
}
