#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mbk/archive.hpp"
#include "mbk/config.hpp"
#include "mbk/tensor.hpp"

namespace mbk {

struct ParamSpec {
    std::string name;
    Shape shape;
};

/// Ordered list of every parameter build() allocates for a config. Shared by
/// initialization, counting, checkpointing and quantization so the closed-form
/// count and the allocation can never drift apart.
std::vector<ParamSpec> parameter_plan(const ModelConfig& config);

struct ParamReport {
    std::int64_t total = 0;      // every scalar allocated by build()
    std::int64_t embedding = 0;  // token/conv/position/segment tables + norm
    std::int64_t heads = 0;      // pooler + MLM transform + NSP classifier
    std::int64_t num_layers = 0;
    std::int64_t layer_bottleneck = 0;   // block entry/exit linears + block norm
    std::int64_t layer_mha = 0;          // q/k/v(/o) projections, biases, norm
    std::int64_t layer_ffn = 0;          // FFN stack, biases, norms
    std::int64_t layer_mha_weights = 0;  // projection matrices only
    std::int64_t layer_ffn_weights = 0;  // FFN matrices only

    std::int64_t layer_total() const { return layer_bottleneck + layer_mha + layer_ffn; }
    /// Embedding plus transformer body; the model-size figure reported for
    /// encoder checkpoints (prediction heads excluded).
    std::int64_t backbone() const { return embedding + num_layers * layer_total(); }
};

/// Closed-form parameter count; matches build() allocation exactly.
ParamReport count_params(const ModelConfig& config);

struct Parameter {
    std::string name;
    TensorPtr value;
};

/// Per-layer inter-block feature maps and per-head attention distributions
/// captured during a forward pass. Tensors stay attached to the tape, so
/// transfer losses computed on a student trace can backpropagate.
struct LayerTrace {
    std::vector<TensorPtr> feature_maps;  // L x [T, h_inter]
    std::vector<TensorPtr> attentions;    // L x [A, T, T], rows stochastic
};

struct ForwardOptions {
    const std::vector<std::uint8_t>* attention_mask = nullptr;  // length T, 1 = attend
    double dropout = 0.0;
    Rng* dropout_rng = nullptr;
};

struct ForwardResult {
    TensorPtr logits;       // [T, vocab]
    TensorPtr nsp_logits;   // [1, 2]
    TensorPtr last_hidden;  // [T, h_inter]
    LayerTrace trace;
};

class Model {
public:
    /// Allocates and initializes all parameters (truncated normal std 0.02,
    /// norm gamma 1 / beta 0, biases 0); deterministic under the seed.
    static Model build(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const std::vector<Parameter>& params() const { return params_; }
    std::vector<Parameter>& params() { return params_; }
    const TensorPtr& param(const std::string& name) const;
    bool has_param(const std::string& name) const { return index_.count(name) > 0; }

    void set_trainable(bool trainable);
    void zero_grads();
    Model clone() const;

    ForwardResult forward(const std::vector<std::int32_t>& token_ids,
                          const std::vector<std::int32_t>& segment_ids,
                          const ForwardOptions& options = {}) const;

    void save(Archive& archive) const;
    void save_checkpoint(const std::string& path) const;  // writes .tbk + .json sidecar
    static Model load(const ModelConfig& config, const Archive& archive);
    static Model load_checkpoint(const std::string& path);

private:
    Model() = default;
    ModelConfig config_;
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mbk
