#include "mbk/config.hpp"

#include <array>
#include <sstream>

#include <json.hpp>

namespace mbk {

using nlohmann::json;

std::string to_string(BlockKind k) {
    switch (k) {
        case BlockKind::classic:
            return "classic";
        case BlockKind::inverted_bottleneck:
            return "inverted_bottleneck";
        case BlockKind::bottleneck:
            return "bottleneck";
        case BlockKind::bottleneck_tiny:
            return "bottleneck_tiny";
    }
    return "?";
}

std::string to_string(EmbeddingKind k) {
    return k == EmbeddingKind::no_op ? "no_op" : "conv3_factorized";
}

std::string to_string(NormKind k) { return k == NormKind::layer_norm ? "layer_norm" : "no_norm"; }

std::string to_string(ActivationKind k) { return k == ActivationKind::gelu ? "gelu" : "relu"; }

namespace {

BlockKind block_kind_from(const std::string& s) {
    if (s == "classic") return BlockKind::classic;
    if (s == "inverted_bottleneck") return BlockKind::inverted_bottleneck;
    if (s == "bottleneck") return BlockKind::bottleneck;
    if (s == "bottleneck_tiny") return BlockKind::bottleneck_tiny;
    throw ConfigError("unknown block_kind '" + s + "'");
}

EmbeddingKind embedding_kind_from(const std::string& s) {
    if (s == "no_op") return EmbeddingKind::no_op;
    if (s == "conv3_factorized") return EmbeddingKind::conv3_factorized;
    throw ConfigError("unknown embedding_kind '" + s + "'");
}

NormKind norm_kind_from(const std::string& s) {
    if (s == "layer_norm") return NormKind::layer_norm;
    if (s == "no_norm") return NormKind::no_norm;
    throw ConfigError("unknown norm_kind '" + s + "'");
}

ActivationKind activation_kind_from(const std::string& s) {
    if (s == "gelu") return ActivationKind::gelu;
    if (s == "relu") return ActivationKind::relu;
    throw ConfigError("unknown activation_kind '" + s + "'");
}

constexpr std::array<const char*, 13> kFieldNames = {
    "vocab_size", "max_positions", "num_layers",     "h_embedding",
    "h_inter",    "h_intra",       "num_heads",      "h_ffn",
    "ffn_stack",  "block_kind",    "embedding_kind", "norm_kind",
    "activation_kind",
};

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 6) {
        throw ConfigError("vocab_size must be at least 6 (five reserved ids plus content)");
    }
    if (max_positions < 1 || num_layers < 1 || h_embedding < 1 || h_inter < 1 || h_intra < 1 ||
        num_heads < 1 || h_ffn < 1 || ffn_stack < 1) {
        throw ConfigError("all dimensions and counts must be positive");
    }
    if (h_intra % num_heads != 0) {
        throw ConfigError("h_intra (" + std::to_string(h_intra) +
                          ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
    }
    if (block_kind == BlockKind::classic && h_intra != h_inter) {
        throw ConfigError("block_kind classic requires h_intra == h_inter, got " +
                          std::to_string(h_intra) + " vs " + std::to_string(h_inter));
    }
    if (embedding_kind == EmbeddingKind::conv3_factorized && !(h_embedding < h_inter)) {
        throw ConfigError("embedding_kind conv3_factorized requires h_embedding < h_inter, got " +
                          std::to_string(h_embedding) + " vs " + std::to_string(h_inter));
    }
    if (embedding_kind == EmbeddingKind::no_op && h_embedding != h_inter) {
        throw ConfigError("embedding_kind no_op requires h_embedding == h_inter, got " +
                          std::to_string(h_embedding) + " vs " + std::to_string(h_inter));
    }
}

std::string ModelConfig::to_json() const {
    json j;
    j["vocab_size"] = vocab_size;
    j["max_positions"] = max_positions;
    j["num_layers"] = num_layers;
    j["h_embedding"] = h_embedding;
    j["h_inter"] = h_inter;
    j["h_intra"] = h_intra;
    j["num_heads"] = num_heads;
    j["h_ffn"] = h_ffn;
    j["ffn_stack"] = ffn_stack;
    j["block_kind"] = to_string(block_kind);
    j["embedding_kind"] = to_string(embedding_kind);
    j["norm_kind"] = to_string(norm_kind);
    j["activation_kind"] = to_string(activation_kind);
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ConfigError("config: document must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* f : kFieldNames) {
            known = known || key == f;
        }
        if (!known) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    ModelConfig c;
    try {
        if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<std::int64_t>();
        if (j.contains("max_positions")) c.max_positions = j.at("max_positions").get<std::int64_t>();
        if (j.contains("num_layers")) c.num_layers = j.at("num_layers").get<std::int64_t>();
        if (j.contains("h_embedding")) c.h_embedding = j.at("h_embedding").get<std::int64_t>();
        if (j.contains("h_inter")) c.h_inter = j.at("h_inter").get<std::int64_t>();
        if (j.contains("h_intra")) c.h_intra = j.at("h_intra").get<std::int64_t>();
        if (j.contains("num_heads")) c.num_heads = j.at("num_heads").get<std::int64_t>();
        if (j.contains("h_ffn")) c.h_ffn = j.at("h_ffn").get<std::int64_t>();
        if (j.contains("ffn_stack")) c.ffn_stack = j.at("ffn_stack").get<std::int64_t>();
        if (j.contains("block_kind")) c.block_kind = block_kind_from(j.at("block_kind"));
        if (j.contains("embedding_kind"))
            c.embedding_kind = embedding_kind_from(j.at("embedding_kind"));
        if (j.contains("norm_kind")) c.norm_kind = norm_kind_from(j.at("norm_kind"));
        if (j.contains("activation_kind"))
            c.activation_kind = activation_kind_from(j.at("activation_kind"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad field value: ") + e.what());
    }
    c.validate();
    return c;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.vocab_size == b.vocab_size && a.max_positions == b.max_positions &&
           a.num_layers == b.num_layers && a.h_embedding == b.h_embedding &&
           a.h_inter == b.h_inter && a.h_intra == b.h_intra && a.num_heads == b.num_heads &&
           a.h_ffn == b.h_ffn && a.ffn_stack == b.ffn_stack && a.block_kind == b.block_kind &&
           a.embedding_kind == b.embedding_kind && a.norm_kind == b.norm_kind &&
           a.activation_kind == b.activation_kind;
}

namespace {

ModelConfig classic_bert(std::int64_t layers, std::int64_t hidden, std::int64_t heads,
                         std::int64_t ffn) {
    ModelConfig c;
    c.num_layers = layers;
    c.h_embedding = hidden;
    c.h_inter = hidden;
    c.h_intra = hidden;
    c.num_heads = heads;
    c.h_ffn = ffn;
    c.ffn_stack = 1;
    c.block_kind = BlockKind::classic;
    c.embedding_kind = EmbeddingKind::no_op;
    c.norm_kind = NormKind::layer_norm;
    c.activation_kind = ActivationKind::gelu;
    return c;
}

/// Teacher-family configuration: inverted bottleneck, 24 layers, factorized
/// 128-dim embedding, FFN intermediate at 4x the intra size.
ModelConfig teacher_ib(std::int64_t h_inter, std::int64_t h_intra, std::int64_t heads) {
    ModelConfig c;
    c.num_layers = 24;
    c.h_embedding = 128;
    c.h_inter = h_inter;
    c.h_intra = h_intra;
    c.num_heads = heads;
    c.h_ffn = 4 * h_intra;
    c.ffn_stack = 1;
    c.block_kind = BlockKind::inverted_bottleneck;
    c.embedding_kind = EmbeddingKind::conv3_factorized;
    c.norm_kind = NormKind::layer_norm;
    c.activation_kind = ActivationKind::gelu;
    return c;
}

ModelConfig student(std::int64_t h_intra, std::int64_t heads, std::int64_t ffn_stack,
                    BlockKind kind) {
    ModelConfig c;
    c.num_layers = 24;
    c.h_embedding = 128;
    c.h_inter = 512;
    c.h_intra = h_intra;
    c.num_heads = heads;
    c.h_ffn = 4 * h_intra;
    c.ffn_stack = ffn_stack;
    c.block_kind = kind;
    c.embedding_kind = EmbeddingKind::conv3_factorized;
    c.norm_kind = NormKind::no_norm;
    c.activation_kind = ActivationKind::relu;
    return c;
}

}  // namespace

ModelConfig table3_row(std::int64_t h_intra) {
    // Rows of the student balance study: (h_intra, heads, ffn_stack).
    struct Row {
        std::int64_t h_intra, heads, ffn_stack;
    };
    constexpr Row rows[] = {{192, 6, 1}, {160, 5, 2}, {128, 4, 4}, {96, 3, 8}};
    for (const auto& r : rows) {
        if (r.h_intra == h_intra) {
            auto c = student(r.h_intra, r.heads, r.ffn_stack, BlockKind::bottleneck);
            c.norm_kind = NormKind::layer_norm;
            c.activation_kind = ActivationKind::gelu;
            return c;
        }
    }
    throw LookupError("table3_row: h_intra must be one of 192, 160, 128, 96; got " +
                      std::to_string(h_intra));
}

ModelConfig preset(const std::string& name) {
    if (name == "bert_large") return classic_bert(24, 1024, 16, 4096);
    if (name == "bert_base") return classic_bert(12, 768, 12, 3072);
    if (name == "ib_bert_large") return teacher_ib(512, 1024, 4);
    if (name == "mobilebert") return student(128, 4, 4, BlockKind::bottleneck);
    if (name == "mobilebert_tiny") return student(128, 4, 2, BlockKind::bottleneck_tiny);
    if (name == "table2_a") return teacher_ib(1024, 1024, 16);
    if (name == "table2_b") return teacher_ib(768, 1024, 16);
    if (name == "table2_c") return teacher_ib(512, 1024, 16);
    if (name == "table2_d") return teacher_ib(384, 1024, 16);
    if (name == "table2_e") return teacher_ib(256, 1024, 16);
    if (name == "table2_f") return teacher_ib(512, 1024, 4);
    if (name == "table2_g") return teacher_ib(512, 512, 4);
    if (name == "table2_h") return teacher_ib(512, 256, 4);
    if (name == "table2_i") return teacher_ib(512, 128, 4);
    if (name == "table3_192") return table3_row(192);
    if (name == "table3_160") return table3_row(160);
    if (name == "table3_128") return table3_row(128);
    if (name == "table3_96") return table3_row(96);
    std::ostringstream msg;
    msg << "unknown preset '" << name << "'; valid presets:";
    for (const auto& n : preset_names()) {
        msg << ' ' << n;
    }
    throw LookupError(msg.str());
}

std::vector<std::string> preset_names() {
    return {"bert_large", "bert_base", "ib_bert_large", "mobilebert", "mobilebert_tiny",
            "table2_a",   "table2_b",  "table2_c",      "table2_d",   "table2_e",
            "table2_f",   "table2_g",  "table2_h",      "table2_i",   "table3_192",
            "table3_160", "table3_128", "table3_96"};
}

}  // namespace mbk
