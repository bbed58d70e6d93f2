#include "mbk/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace mbk {

namespace {

bool has_block_linears(BlockKind k) { return k != BlockKind::classic; }
bool has_attn_out_proj(BlockKind k) { return k != BlockKind::bottleneck_tiny; }

/// Width of the map the q/k/v projections read from.
std::int64_t mha_input_dim(const ModelConfig& c) {
    return c.block_kind == BlockKind::bottleneck_tiny ? c.h_intra : c.h_inter;
}

std::string layer_prefix(std::int64_t i) { return "layer." + std::to_string(i) + "."; }

}  // namespace

std::vector<ParamSpec> parameter_plan(const ModelConfig& c) {
    c.validate();
    std::vector<ParamSpec> plan;
    plan.push_back({"embedding.token", {c.vocab_size, c.h_embedding}});
    if (c.embedding_kind == EmbeddingKind::conv3_factorized) {
        plan.push_back({"embedding.conv.kernel", {3, c.h_embedding, c.h_inter}});
        plan.push_back({"embedding.conv.bias", {c.h_inter}});
    }
    plan.push_back({"embedding.position", {c.max_positions, c.h_inter}});
    plan.push_back({"embedding.segment", {2, c.h_inter}});
    plan.push_back({"embedding.norm.gamma", {c.h_inter}});
    plan.push_back({"embedding.norm.beta", {c.h_inter}});

    const std::int64_t qkv_in = mha_input_dim(c);
    for (std::int64_t i = 0; i < c.num_layers; ++i) {
        const std::string p = layer_prefix(i);
        if (has_block_linears(c.block_kind)) {
            plan.push_back({p + "in_proj.w", {c.h_inter, c.h_intra}});
            plan.push_back({p + "in_proj.b", {c.h_intra}});
        }
        // No key bias: softmax scores are invariant to a constant shift per
        // key, so it could never receive a gradient.
        for (const char* proj : {"q", "k", "v"}) {
            plan.push_back({p + "mha." + proj + ".w", {qkv_in, c.h_intra}});
            if (*proj != 'k') {
                plan.push_back({p + "mha." + std::string(proj) + ".b", {c.h_intra}});
            }
        }
        if (has_attn_out_proj(c.block_kind)) {
            plan.push_back({p + "mha.o.w", {c.h_intra, c.h_intra}});
            plan.push_back({p + "mha.o.b", {c.h_intra}});
        }
        plan.push_back({p + "mha.norm.gamma", {c.h_intra}});
        plan.push_back({p + "mha.norm.beta", {c.h_intra}});
        for (std::int64_t f = 0; f < c.ffn_stack; ++f) {
            const std::string fp = p + "ffn." + std::to_string(f) + ".";
            plan.push_back({fp + "in.w", {c.h_intra, c.h_ffn}});
            plan.push_back({fp + "in.b", {c.h_ffn}});
            plan.push_back({fp + "out.w", {c.h_ffn, c.h_intra}});
            plan.push_back({fp + "out.b", {c.h_intra}});
            plan.push_back({fp + "norm.gamma", {c.h_intra}});
            plan.push_back({fp + "norm.beta", {c.h_intra}});
        }
        if (has_block_linears(c.block_kind)) {
            plan.push_back({p + "out_proj.w", {c.h_intra, c.h_inter}});
            plan.push_back({p + "out_proj.b", {c.h_inter}});
            plan.push_back({p + "block_norm.gamma", {c.h_inter}});
            plan.push_back({p + "block_norm.beta", {c.h_inter}});
        }
    }

    plan.push_back({"pooler.w", {c.h_inter, c.h_inter}});
    plan.push_back({"pooler.b", {c.h_inter}});
    plan.push_back({"mlm.w", {c.h_inter, c.h_embedding}});
    plan.push_back({"mlm.b", {c.h_embedding}});
    plan.push_back({"nsp.w", {c.h_inter, 2}});
    plan.push_back({"nsp.b", {2}});
    return plan;
}

ParamReport count_params(const ModelConfig& c) {
    const auto plan = parameter_plan(c);
    ParamReport r;
    r.num_layers = c.num_layers;
    const std::string l0 = layer_prefix(0);
    for (const auto& spec : plan) {
        const std::int64_t n = numel(spec.shape);
        r.total += n;
        if (spec.name.rfind("embedding.", 0) == 0) {
            r.embedding += n;
        } else if (spec.name.rfind("pooler.", 0) == 0 || spec.name.rfind("mlm.", 0) == 0 ||
                   spec.name.rfind("nsp.", 0) == 0) {
            r.heads += n;
        } else if (spec.name.rfind(l0, 0) == 0) {
            const std::string rest = spec.name.substr(l0.size());
            if (rest.rfind("mha.", 0) == 0) {
                r.layer_mha += n;
                if (spec.shape.size() == 2 && rest.find(".w") != std::string::npos) {
                    r.layer_mha_weights += n;
                }
            } else if (rest.rfind("ffn.", 0) == 0) {
                r.layer_ffn += n;
                if (spec.shape.size() == 2) {
                    r.layer_ffn_weights += n;
                }
            } else {
                r.layer_bottleneck += n;
            }
        }
    }
    // All layers are structurally identical; the per-layer sums above cover
    // layer 0 and the grand total covers the rest.
    return r;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config_ = config;
    auto rng = Rng::stream(seed, "init");
    for (const auto& spec : parameter_plan(config)) {
        TensorPtr t;
        const bool is_gamma = spec.name.size() >= 5 && spec.name.ends_with("gamma");
        const bool is_vector = spec.shape.size() == 1;
        if (is_gamma) {
            t = ones(spec.shape, true);
        } else if (is_vector) {
            t = zeros(spec.shape, true);  // biases and norm shifts
        } else {
            t = randn_trunc(spec.shape, 0.02, rng, true);
        }
        m.index_[spec.name] = m.params_.size();
        m.params_.push_back({spec.name, std::move(t)});
    }
    return m;
}

const TensorPtr& Model::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw LookupError("model: no parameter named '" + name + "'");
    }
    return params_[it->second].value;
}

void Model::set_trainable(bool trainable) {
    for (auto& p : params_) {
        p.value->requires_grad = trainable;
        p.value->grad.clear();
    }
}

void Model::zero_grads() {
    for (auto& p : params_) {
        p.value->zero_grad();
    }
}

Model Model::clone() const {
    Model m;
    m.config_ = config_;
    m.index_ = index_;
    m.params_.reserve(params_.size());
    for (const auto& p : params_) {
        m.params_.push_back({p.name, make_tensor(p.value->shape, p.value->data,
                                                 p.value->requires_grad)});
    }
    return m;
}

namespace {

TensorPtr apply_norm(const ModelConfig& c, const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta) {
    return c.norm_kind == NormKind::layer_norm ? layer_norm(x, gamma, beta) : nonorm(x, gamma, beta);
}

TensorPtr apply_act(const ModelConfig& c, const TensorPtr& x) {
    return c.activation_kind == ActivationKind::gelu ? gelu(x) : relu(x);
}

TensorPtr drop(const TensorPtr& x, const ForwardOptions& o) {
    return dropout(x, o.dropout, o.dropout_rng);
}

}  // namespace

ForwardResult Model::forward(const std::vector<std::int32_t>& token_ids,
                             const std::vector<std::int32_t>& segment_ids,
                             const ForwardOptions& options) const {
    const auto T = static_cast<std::int64_t>(token_ids.size());
    const auto& c = config_;
    if (T < 1) {
        throw LengthError("forward: empty input");
    }
    if (T > c.max_positions) {
        throw LengthError("forward: sequence length " + std::to_string(T) +
                          " exceeds max_positions " + std::to_string(c.max_positions));
    }
    if (segment_ids.size() != token_ids.size()) {
        throw ShapeError("forward: segment_ids length differs from token_ids");
    }
    if (options.attention_mask && options.attention_mask->size() != token_ids.size()) {
        throw ShapeError("forward: attention_mask length differs from token_ids");
    }

    // Embedding stack.
    TensorPtr h = embedding_lookup(param("embedding.token"), token_ids);
    if (c.embedding_kind == EmbeddingKind::conv3_factorized) {
        h = conv1d_same(h, param("embedding.conv.kernel"), param("embedding.conv.bias"));
    }
    std::vector<std::int64_t> position_rows(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t) {
        position_rows[static_cast<std::size_t>(t)] = t;
    }
    h = add(h, gather_rows(param("embedding.position"), position_rows));
    std::vector<std::int64_t> segment_rows(segment_ids.begin(), segment_ids.end());
    h = add(h, gather_rows(param("embedding.segment"), segment_rows));
    h = apply_norm(c, h, param("embedding.norm.gamma"), param("embedding.norm.beta"));
    h = drop(h, options);

    // Additive key mask shared by every head and layer.
    TensorPtr score_mask;
    if (options.attention_mask) {
        std::vector<double> md(static_cast<std::size_t>(T * T), 0.0);
        for (std::int64_t q = 0; q < T; ++q) {
            for (std::int64_t k = 0; k < T; ++k) {
                if ((*options.attention_mask)[static_cast<std::size_t>(k)] == 0) {
                    md[static_cast<std::size_t>(q * T + k)] = -1e9;
                }
            }
        }
        score_mask = make_tensor({T, T}, std::move(md));
    }

    const std::int64_t head_dim = c.h_intra / c.num_heads;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    ForwardResult result;
    result.trace.feature_maps.reserve(static_cast<std::size_t>(c.num_layers));
    result.trace.attentions.reserve(static_cast<std::size_t>(c.num_layers));

    for (std::int64_t i = 0; i < c.num_layers; ++i) {
        const std::string p = layer_prefix(i);
        const TensorPtr x = h;

        TensorPtr attn_base;  // residual target of the attention sublayer
        if (c.block_kind == BlockKind::classic) {
            attn_base = x;
        } else {
            attn_base = linear(x, param(p + "in_proj.w"), param(p + "in_proj.b"));
        }
        const TensorPtr qkv_src = c.block_kind == BlockKind::bottleneck_tiny ? attn_base : x;

        TensorPtr q = linear(qkv_src, param(p + "mha.q.w"), param(p + "mha.q.b"));
        TensorPtr k = matmul(qkv_src, param(p + "mha.k.w"));
        TensorPtr v = linear(qkv_src, param(p + "mha.v.w"), param(p + "mha.v.b"));

        std::vector<TensorPtr> head_probs;
        std::vector<TensorPtr> head_ctx;
        head_probs.reserve(static_cast<std::size_t>(c.num_heads));
        head_ctx.reserve(static_cast<std::size_t>(c.num_heads));
        for (std::int64_t a = 0; a < c.num_heads; ++a) {
            auto qa = slice_cols(q, a * head_dim, head_dim);
            auto ka = slice_cols(k, a * head_dim, head_dim);
            auto va = slice_cols(v, a * head_dim, head_dim);
            auto scores = scale(matmul_nt(qa, ka), score_scale);
            if (score_mask) {
                scores = add(scores, score_mask);
            }
            auto probs = softmax(scores, -1);
            head_probs.push_back(probs);
            head_ctx.push_back(matmul(drop(probs, options), va));
        }
        result.trace.attentions.push_back(stack0(head_probs));

        TensorPtr attn = concat_cols(head_ctx);
        if (has_attn_out_proj(c.block_kind)) {
            attn = linear(attn, param(p + "mha.o.w"), param(p + "mha.o.b"));
        }
        TensorPtr hidden = apply_norm(c, add(attn_base, drop(attn, options)),
                                      param(p + "mha.norm.gamma"), param(p + "mha.norm.beta"));

        for (std::int64_t f = 0; f < c.ffn_stack; ++f) {
            const std::string fp = p + "ffn." + std::to_string(f) + ".";
            auto mid = apply_act(c, linear(hidden, param(fp + "in.w"), param(fp + "in.b")));
            auto out = linear(mid, param(fp + "out.w"), param(fp + "out.b"));
            hidden = apply_norm(c, add(hidden, drop(out, options)), param(fp + "norm.gamma"),
                                param(fp + "norm.beta"));
        }

        if (c.block_kind == BlockKind::classic) {
            h = hidden;
        } else {
            auto up = linear(hidden, param(p + "out_proj.w"), param(p + "out_proj.b"));
            h = apply_norm(c, add(x, drop(up, options)), param(p + "block_norm.gamma"),
                           param(p + "block_norm.beta"));
        }
        result.trace.feature_maps.push_back(h);
    }

    result.last_hidden = h;

    auto transformed = apply_act(c, linear(h, param("mlm.w"), param("mlm.b")));
    result.logits = matmul_nt(transformed, param("embedding.token"));

    auto pooled = tanh_act(linear(gather_rows(h, {0}), param("pooler.w"), param("pooler.b")));
    result.nsp_logits = linear(pooled, param("nsp.w"), param("nsp.b"));
    return result;
}

void Model::save(Archive& archive) const {
    for (const auto& p : params_) {
        archive.put_f64(p.name, p.value->shape, p.value->data.data());
    }
}

void Model::save_checkpoint(const std::string& path) const {
    Archive a;
    save(a);
    a.save_file(path);
    std::ofstream cfg(path + ".json");
    if (!cfg) {
        throw IoError("model: cannot write config sidecar for " + path);
    }
    cfg << config_.to_json() << '\n';
}

Model Model::load(const ModelConfig& config, const Archive& archive) {
    Model m;
    m.config_ = config;
    for (const auto& spec : parameter_plan(config)) {
        const ArchiveEntry* e = archive.find(spec.name);
        if (!e) {
            throw IoError("checkpoint: missing tensor '" + spec.name + "'");
        }
        if (e->shape != spec.shape) {
            throw IoError("checkpoint: tensor '" + spec.name + "' has shape " +
                          shape_str(e->shape) + ", expected " + shape_str(spec.shape));
        }
        m.index_[spec.name] = m.params_.size();
        m.params_.push_back({spec.name, make_tensor(spec.shape, e->as_f64(), true)});
    }
    return m;
}

Model Model::load_checkpoint(const std::string& path) {
    std::ifstream cfg(path + ".json");
    if (!cfg) {
        throw IoError("model: missing config sidecar " + path + ".json");
    }
    std::string text((std::istreambuf_iterator<char>(cfg)), std::istreambuf_iterator<char>());
    return load(ModelConfig::from_json(text), Archive::load_file(path));
}

}  // namespace mbk
