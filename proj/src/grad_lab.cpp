#include "hornn/grad_lab.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "hornn/bptt.hpp"
#include "hornn/errors.hpp"
#include "hornn/reference.hpp"

namespace hornn {

namespace {

struct NamedSpan {
  std::string name;
  std::span<double> values;
  TensorRole role;
};

std::vector<NamedSpan> tensors_of(Model& m) {
  std::vector<NamedSpan> out;
  m.for_each_tensor([&](int layer, const TensorRef& t) {
    const std::string owner = layer < 0 ? "head" : "layer" + std::to_string(layer);
    out.push_back({owner + "." + std::string(t.name), t.values, t.role});
  });
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

GradCheckResult finite_diff_check(const GradCheckOptions& o) {
  o.cell.validate();
  if (o.length == 0) throw ConfigError("gradcheck: sequence length must be positive");
  if (!(o.epsilon > 0.0)) throw ConfigError("gradcheck: epsilon must be positive");

  GradCheckResult result;
  const CellConfig cells[] = {o.cell};
  Model model = Model::create(cells, o.num_classes, o.seed, o.init_range);

  Rng rng(o.seed ^ 0xC0FFEE);
  SequenceBatch batch;
  batch.frames = Matrix(o.length, o.cell.d_x);
  for (double& v : batch.frames.span()) v = rng.normal();
  batch.num_classes = o.num_classes;
  batch.labels.resize(o.length);
  for (auto& y : batch.labels) y = static_cast<std::int32_t>(rng.below(o.num_classes));

  // The numeric side runs in extended precision: a double-precision loss of
  // order T has a rounding floor near 1e-10 in the difference quotient, which
  // is larger than 1e-6 of the smallest gradient entries.
  const auto loss_of = [&](const Model& m) {
    const long double l = reference_loss(m, batch);
    if (!std::isfinite(static_cast<double>(l))) throw NumericError("gradcheck: non-finite loss");
    return l;
  };

  const UnfoldedStates states = unfold_forward(model, batch);
  if (!std::isfinite(states.loss)) throw NumericError("gradcheck: non-finite loss");
  const long double ref = loss_of(model);
  result.forward_mismatch =
      static_cast<double>(std::abs(static_cast<long double>(states.loss) - ref) / std::abs(ref));
  BackwardResult back = bptt_backward(model, states, batch);
  std::vector<NamedSpan> analytic = tensors_of(back.grads.d);
  if (o.corrupt) analytic.front().values[0] += 0.1;

  std::vector<NamedSpan> params = tensors_of(model);
  for (std::size_t i = 0; i < params.size(); ++i) {
    // A frozen scale has its gradient zeroed on purpose; nothing to compare.
    if (params[i].role == TensorRole::Scale && o.cell.freeze_scale) continue;
    for (std::size_t j = 0; j < params[i].values.size(); ++j) {
      double& p = params[i].values[j];
      const double saved = p;
      const double hi = saved + o.epsilon;
      const double lo = saved - o.epsilon;
      p = hi;
      const long double up = loss_of(model);
      p = lo;
      const long double down = loss_of(model);
      p = saved;
      // hi - lo is exact and absorbs the rounding of saved +- epsilon.
      const double numeric = static_cast<double>((up - down) / static_cast<long double>(hi - lo));
      const double err = std::abs(analytic[i].values[j] - numeric) / std::max(std::abs(numeric), 1e-8);
      if (err > result.max_rel_error || result.checked == 0) {
        result.max_rel_error = err;
        result.worst_tensor = params[i].name;
        result.worst_index = j;
      }
      ++result.checked;
    }
  }
  return result;
}

LagCurve lag_curve(const CellParams& params, std::span<const Vector> probe, std::size_t max_lag) {
  const std::size_t T = probe.size();
  if (max_lag >= T) {
    throw ConfigError("lag_curve: K=" + std::to_string(max_lag) + " must be smaller than T=" +
                      std::to_string(T));
  }
  const LayerTrace trace = forward_layer(params, probe);
  const std::size_t out_dim = params.config.output_dim();
  const double unit = 1.0 / std::sqrt(static_cast<double>(out_dim));

  LagCurve curve;
  curve.g.assign(max_lag + 1, 0.0);
  std::vector<Vector> d_out(T, Vector(out_dim));
  for (std::size_t t = max_lag; t < T; ++t) {
    // Steps after t do not influence L_t, so the window ends at t.
    d_out[t].fill(unit);
    const std::size_t len = t + 1;
    const LayerTrace head{std::vector<StepResult>(trace.steps.begin(),
                                                  trace.steps.begin() + static_cast<std::ptrdiff_t>(len))};
    const LayerGradients g =
        backward_layer(params, head, probe.first(len), std::span<const Vector>(d_out).first(len));
    for (std::size_t k = 0; k <= max_lag; ++k) curve.g[k] += l2_norm(g.d_hidden[t - k].span());
    d_out[t].fill(0.0);
  }
  const double count = static_cast<double>(T - max_lag);
  for (double& v : curve.g) v /= count;
  fit_decay(curve);
  return curve;
}

void fit_decay(LagCurve& curve) {
  std::vector<double> ks;
  std::vector<double> ys;
  for (std::size_t k = 2; k < curve.g.size(); ++k) {
    if (!(curve.g[k] > 0.0)) break;
    ks.push_back(static_cast<double>(k));
    ys.push_back(std::log(curve.g[k]));
  }
  curve.fit_points = ks.size();
  if (ks.size() < 2) {
    curve.degenerate = true;
    curve.decay_rate = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const double n = static_cast<double>(ks.size());
  double mk = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    mk += ks[i];
    my += ys[i];
  }
  mk /= n;
  my /= n;
  double sky = 0.0;
  double skk = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    sky += (ks[i] - mk) * (ys[i] - my);
    skk += (ks[i] - mk) * (ks[i] - mk);
  }
  curve.degenerate = false;
  curve.decay_rate = -sky / skk;
}

std::vector<Vector> probe_sequence(std::size_t length, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> out(length, Vector(dim));
  for (Vector& v : out) {
    for (double& x : v.span()) x = rng.normal();
  }
  return out;
}

std::string describe(const CellConfig& config) {
  const CellConfig def = CellConfig::make(config.kind, 1, 1, 1);
  std::string s = to_string(config.kind);
  if (config.activation != def.activation) s += "_" + to_string(config.activation);
  return s;
}

DecayComparison decay_compare(const DecayCompareOptions& o) {
  if (o.configs.empty()) throw ConfigError("decay_compare: no architectures given");
  if (o.seeds.size() < 3) throw ConfigError("decay_compare: needs at least 3 seeds");
  if (o.max_lag >= o.length) throw ConfigError("decay_compare: K must be smaller than T");
  for (const CellConfig& c : o.configs) c.validate();

  DecayComparison cmp;
  cmp.seeds = o.seeds;
  for (const CellConfig& c : o.configs) {
    DecayRow row;
    row.config = c;
    row.label = describe(c);
    row.curves.resize(o.seeds.size());
    cmp.rows.push_back(std::move(row));
  }

  const std::size_t jobs = o.configs.size() * o.seeds.size();
  std::vector<std::exception_ptr> errors(jobs);
  const auto n_jobs = static_cast<std::ptrdiff_t>(jobs);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t job = 0; job < n_jobs; ++job) {
    const std::size_t r = static_cast<std::size_t>(job) / o.seeds.size();
    const std::size_t s = static_cast<std::size_t>(job) % o.seeds.size();
    try {
      const CellConfig& c = o.configs[r];
      const CellParams params = CellParams::random(c, o.seeds[s], o.init_range);
      // The probe depends on the seed and input size only, never on the kind.
      const auto probe = probe_sequence(o.length, c.d_x, o.seeds[s] ^ 0x9E3779B97F4A7C15ULL);
      cmp.rows[r].curves[s] = lag_curve(params, probe, o.max_lag);
    } catch (...) {
      errors[static_cast<std::size_t>(job)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (DecayRow& row : cmp.rows) {
    std::vector<double> rates;
    for (const LagCurve& c : row.curves) {
      if (c.degenerate) {
        ++row.degenerate;
      } else {
        rates.push_back(c.decay_rate);
      }
    }
    row.median_rate = median(std::move(rates));
  }

  const DecayRow* hornn = nullptr;
  const DecayRow* rnn = nullptr;
  for (const DecayRow& row : cmp.rows) {
    if (!hornn && is_high_order(row.config.kind)) hornn = &row;
    if (!rnn && row.config.kind == CellKind::Rnn) rnn = &row;
  }
  if (hornn && rnn) cmp.hornn_no_faster_than_rnn = hornn->median_rate <= rnn->median_rate;
  return cmp;
}

}  // namespace hornn
