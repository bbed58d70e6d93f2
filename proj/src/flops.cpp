#include "mbk/flops.hpp"

namespace mbk {

std::int64_t estimate_flops(const ModelConfig& c, std::int64_t seq_len) {
    if (seq_len < 1) {
        throw ConfigError("estimate_flops: seq_len must be >= 1");
    }
    c.validate();
    const std::int64_t T = seq_len;
    std::int64_t macs = 0;

    if (c.embedding_kind == EmbeddingKind::conv3_factorized) {
        macs += T * 3 * c.h_embedding * c.h_inter;
    }

    const std::int64_t qkv_in =
        c.block_kind == BlockKind::bottleneck_tiny ? c.h_intra : c.h_inter;
    std::int64_t per_layer = 0;
    if (c.block_kind != BlockKind::classic) {
        per_layer += 2 * T * c.h_inter * c.h_intra;  // block entry/exit linears
    }
    per_layer += 3 * T * qkv_in * c.h_intra;  // q,k,v projections
    per_layer += 2 * T * T * c.h_intra;       // attention scores + context
    if (c.block_kind != BlockKind::bottleneck_tiny) {
        per_layer += T * c.h_intra * c.h_intra;  // attention output projection
    }
    per_layer += c.ffn_stack * 2 * T * c.h_intra * c.h_ffn;
    macs += c.num_layers * per_layer;

    return 2 * macs;
}

}  // namespace mbk
