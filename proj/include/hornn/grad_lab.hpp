#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hornn/cells.hpp"

namespace hornn {

struct GradCheckOptions {
  CellConfig cell;
  std::uint64_t seed = 1;
  std::size_t length = 12;
  std::size_t num_classes = 3;
  // Larger than the training init so that gradients are well above the
  // finite-difference noise floor.
  double init_range = 0.5;
  double epsilon = 1e-5;
  // Adds 0.1 to one analytic gradient entry; the check must then fail.
  bool corrupt = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;  // "layer0.W", "head.W_out", ...
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  // Relative gap between the production loss and the reference loss.
  double forward_mismatch = 0.0;
};

// Compares raw BPTT gradients of the summed cross-entropy of a one-layer model
// (cell + head, every frame labeled) against central differences over every
// parameter. The error is |analytic - numeric| / max(|numeric|, 1e-8). The
// numeric side differentiates reference_loss, not the production forward.
GradCheckResult finite_diff_check(const GradCheckOptions& options);

struct LagCurve {
  std::vector<double> g;  // g[k] for k = 0..K
  double decay_rate = 0.0;
  std::size_t fit_points = 0;
  bool degenerate = false;  // fewer than two usable points for the fit
};

// g(k) = mean over t in [K, T-1] of ||dL_t/dh_{t-k}||_2 where L_t = <v, y_t>,
// y_t is the layer output and v the unit vector with equal entries. Every t
// in the averaging set reaches back the full K steps, so all lags average
// over the same t.
LagCurve lag_curve(const CellParams& params, std::span<const Vector> probe, std::size_t max_lag);

// Least squares fit of log g(k) = alpha - lambda k over k in [2, K]. A zero
// entry ends the fit window.
void fit_decay(LagCurve& curve);

// Standard-normal probe frames.
std::vector<Vector> probe_sequence(std::size_t length, std::size_t dim, std::uint64_t seed);

struct DecayCompareOptions {
  std::vector<CellConfig> configs;
  std::vector<std::uint64_t> seeds;
  std::size_t max_lag = 19;
  std::size_t length = 40;
  double init_range = 0.05;
};

struct DecayRow {
  CellConfig config;
  std::string label;
  std::vector<LagCurve> curves;  // one per seed
  double median_rate = 0.0;      // NaN when every curve is degenerate
  std::size_t degenerate = 0;
};

struct DecayComparison {
  std::vector<DecayRow> rows;
  std::vector<std::uint64_t> seeds;
  // Median rate of the first high-order row <= that of the first plain RNN
  // row, when both are present.
  std::optional<bool> hornn_no_faster_than_rnn;
};

// For each seed every architecture gets parameters from the same seed stream
// and sees the same probe sequence.
DecayComparison decay_compare(const DecayCompareOptions& options);

// "rnn", "rnn_relu", "hornn_sigmoid", ...: the kind name, plus the activation
// when it differs from the kind's default.
std::string describe(const CellConfig& config);

}  // namespace hornn
