#pragma once

#include <string>
#include <vector>

#include "mbk/common.hpp"

namespace mbk {

enum class BlockKind { classic, inverted_bottleneck, bottleneck, bottleneck_tiny };
enum class EmbeddingKind { no_op, conv3_factorized };
enum class NormKind { layer_norm, no_norm };
enum class ActivationKind { gelu, relu };

std::string to_string(BlockKind k);
std::string to_string(EmbeddingKind k);
std::string to_string(NormKind k);
std::string to_string(ActivationKind k);

/// Complete architectural description of one encoder.
struct ModelConfig {
    std::int64_t vocab_size = 30522;
    std::int64_t max_positions = 512;
    std::int64_t num_layers = 24;
    std::int64_t h_embedding = 128;
    std::int64_t h_inter = 512;   // inter-block feature map size
    std::int64_t h_intra = 128;   // intra-block bottleneck size
    std::int64_t num_heads = 4;
    std::int64_t h_ffn = 512;
    std::int64_t ffn_stack = 4;  // FFNs per block
    BlockKind block_kind = BlockKind::bottleneck;
    EmbeddingKind embedding_kind = EmbeddingKind::conv3_factorized;
    NormKind norm_kind = NormKind::layer_norm;
    ActivationKind activation_kind = ActivationKind::gelu;

    /// Throws ConfigError naming the violated invariant.
    void validate() const;

    std::string to_json() const;
    /// Parses a JSON document with exactly the ModelConfig field names as
    /// keys; unknown keys are rejected.
    static ModelConfig from_json(const std::string& text);
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

/// Returns one of the named reference configurations. Recognized names:
/// bert_large, bert_base, ib_bert_large, mobilebert, mobilebert_tiny,
/// table2_a..table2_i, table3_192/160/128/96.
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();
/// Student-family configuration for a given intra-block size (192/160/128/96).
ModelConfig table3_row(std::int64_t h_intra);

}  // namespace mbk
