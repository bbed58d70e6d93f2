#pragma once

#include "mbk/config.hpp"

namespace mbk {

/// Closed-form FLOP estimate for one forward pass at sequence length T:
/// 2 x multiply-accumulates over every matmul, convolution and attention
/// score/context product. Softmax, norms and activations are excluded, so
/// the figure is identical across norm/activation variants.
std::int64_t estimate_flops(const ModelConfig& config, std::int64_t seq_len);

}  // namespace mbk
