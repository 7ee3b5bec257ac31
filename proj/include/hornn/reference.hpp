#pragma once

#include "hornn/model.hpp"
#include "hornn/sequence.hpp"

namespace hornn {

// Summed cross-entropy over labeled frames, computed by a separate scalar
// implementation of every cell in extended precision. It shares no code with
// the production forward pass, so it doubles as a cross-check of that pass,
// and its rounding floor sits far below what central differences need.
long double reference_loss(const Model& model, const SequenceBatch& batch);

}  // namespace hornn
