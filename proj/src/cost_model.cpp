#include "hornn/cost_model.hpp"

#include <cmath>
#include <cstdio>

#include "hornn/errors.hpp"
#include "hornn/model.hpp"

namespace hornn {

std::uint64_t param_count(const CellConfig& config) {
  config.validate();
  const std::uint64_t dx = config.d_x;
  const std::uint64_t dh = config.d_h;
  const std::uint64_t dp = config.d_p;
  switch (config.kind) {
    case CellKind::Rnn: return (dx + dh) * dh + dh;
    case CellKind::HornnRelu:
    case CellKind::HornnSigmoid: return (dx + 2 * dh) * dh + dh;
    case CellKind::HornnpRelu:
    case CellKind::HornnpSigmoid: return dh * dp + (dx + 2 * dp) * dh + dh;
    case CellKind::Lstm: return 4 * (dx + dh) * dh + 7 * dh;
    case CellKind::Lstmp: return dh * dp + 4 * (dx + dp) * dh + 7 * dh;
    case CellKind::ResRnn: return (dx + dh) * dh + dh * dh + dh;
  }
  throw ConfigError("param_count: unknown cell kind");
}

std::uint64_t stack_param_count(std::span<const CellConfig> layers) {
  validate_stack(layers);
  std::uint64_t total = 0;
  for (const CellConfig& c : layers) total += param_count(c);
  return total;
}

std::uint64_t madds_per_frame(const CellConfig& config) {
  config.validate();
  const std::uint64_t dx = config.d_x;
  const std::uint64_t dh = config.d_h;
  const std::uint64_t dp = config.d_p;
  switch (config.kind) {
    case CellKind::Rnn: return (dx + dh) * dh;
    case CellKind::HornnRelu:
    case CellKind::HornnSigmoid: return (dx + 2 * dh) * dh;
    case CellKind::HornnpRelu:
    case CellKind::HornnpSigmoid: return (dx + 3 * dp) * dh;
    case CellKind::Lstm: return 4 * (dx + dh) * dh;
    case CellKind::Lstmp: return dh * dp + 4 * (dx + dp) * dh;
    case CellKind::ResRnn: return (dx + 2 * dh) * dh;
  }
  throw ConfigError("madds_per_frame: unknown cell kind");
}

ReductionRatio reduction_ratio(std::size_t d_x, std::size_t d_h, std::size_t d_p) {
  if (d_p == 0) throw ConfigError("reduction_ratio: d_p must be positive");
  const double full = static_cast<double>(param_count(CellConfig::make(CellKind::HornnRelu, d_x, d_h)));
  const double projected =
      static_cast<double>(param_count(CellConfig::make(CellKind::HornnpRelu, d_x, d_h, d_p)));
  ReductionRatio r;
  r.exact = full / projected;
  r.approximation = 2.0 * static_cast<double>(d_h) / (3.0 * static_cast<double>(d_p));
  r.relative_difference = std::abs(r.approximation - r.exact) / r.exact;
  return r;
}

CostReport cost_report(std::span<const CellConfig> layers) {
  validate_stack(layers);
  CostReport report;
  bool all_hornnp = true;
  std::uint64_t unprojected = 0;
  for (const CellConfig& c : layers) {
    LayerCost lc;
    lc.config = c;
    lc.params = param_count(c);
    lc.madds = madds_per_frame(c);
    lc.scale_params = c.activation == ActivationKind::PSigmoid ? c.d_h : 0;
    report.params_recurrent += lc.params;
    report.madds_per_frame += lc.madds;
    report.layers.push_back(lc);
    if (is_high_order(c.kind) && is_projected(c.kind)) {
      unprojected += param_count(CellConfig::make(CellKind::HornnRelu, c.d_x, c.d_h));
    } else {
      all_hornnp = false;
    }
  }
  if (all_hornnp) {
    report.reduction_ratio_vs_unprojected =
        static_cast<double>(unprojected) / static_cast<double>(report.params_recurrent);
  }
  return report;
}

std::string format_millions(std::uint64_t count) {
  // Integer arithmetic: round count / 10^4 half up, then print as x.yy.
  const std::uint64_t hundredths = (count + 5000) / 10000;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu.%02lluM",
                static_cast<unsigned long long>(hundredths / 100),
                static_cast<unsigned long long>(hundredths % 100));
  return buf;
}

}  // namespace hornn
