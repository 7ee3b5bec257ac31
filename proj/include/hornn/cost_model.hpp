#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hornn/cells.hpp"

namespace hornn {

// Recurrent-layer parameter count. The p-sigmoid scale and the unweighted
// h_{t-m} shortcut contribute nothing.
//   RNN     (D_x + D_h) D_h + D_h
//   HORNN   (D_x + 2 D_h) D_h + D_h
//   HORNNP  D_h D_p + (D_x + 2 D_p) D_h + D_h
//   LSTM    4 (D_x + D_h) D_h + 7 D_h
//   LSTMP   D_h D_p + 4 (D_x + D_p) D_h + 7 D_h
//   ResRNN  (D_x + D_h) D_h + D_h D_h + D_h
std::uint64_t param_count(const CellConfig& config);

// Sum over layers after checking the dimension chain.
std::uint64_t stack_param_count(std::span<const CellConfig> layers);

// Multiply-adds per frame for matrix products only.
std::uint64_t madds_per_frame(const CellConfig& config);

struct ReductionRatio {
  double exact;          // HORNN params / HORNNP params
  double approximation;  // 2 D_h / (3 D_p)
  double relative_difference;
};

ReductionRatio reduction_ratio(std::size_t d_x, std::size_t d_h, std::size_t d_p);

struct LayerCost {
  CellConfig config;
  std::uint64_t params = 0;
  std::uint64_t madds = 0;
  std::uint64_t scale_params = 0;  // p-sigmoid scale, reported separately
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::uint64_t params_recurrent = 0;
  std::uint64_t madds_per_frame = 0;
  // Only set when every layer is a high-order kind with a projection.
  double reduction_ratio_vs_unprojected = 0.0;
};

CostReport cost_report(std::span<const CellConfig> layers);

// "0.42M": millions rounded to two decimals, half away from zero.
std::string format_millions(std::uint64_t count);

}  // namespace hornn
