#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>

#include "mbk/grad_check.hpp"
#include "mbk/model.hpp"

using namespace mbk;

namespace {

ModelConfig tiny_config(BlockKind kind) {
    ModelConfig c;
    c.vocab_size = 19;
    c.max_positions = 16;
    c.num_layers = 2;
    c.num_heads = 2;
    c.h_inter = 8;
    c.h_intra = kind == BlockKind::classic ? 8 : 4;
    c.h_ffn = 10;
    c.ffn_stack = 2;
    c.block_kind = kind;
    if (kind == BlockKind::classic) {
        c.embedding_kind = EmbeddingKind::no_op;
        c.h_embedding = c.h_inter;
    } else {
        c.embedding_kind = EmbeddingKind::conv3_factorized;
        c.h_embedding = 4;
    }
    return c;
}

std::int64_t allocated_scalars(const Model& m) {
    std::int64_t n = 0;
    for (const auto& p : m.params()) {
        n += p.value->size();
    }
    return n;
}

ModelConfig random_legal_config(Rng& rng) {
    ModelConfig c;
    const BlockKind kinds[] = {BlockKind::classic, BlockKind::inverted_bottleneck,
                               BlockKind::bottleneck, BlockKind::bottleneck_tiny};
    c.block_kind = kinds[rng.next_range(0, 4)];
    c.num_heads = rng.next_range(1, 4);
    c.h_intra = c.num_heads * rng.next_range(1, 5) * 2;
    c.h_inter = c.block_kind == BlockKind::classic
                    ? c.h_intra
                    : 2 * rng.next_range(2, 9);
    c.h_ffn = rng.next_range(2, 17);
    c.ffn_stack = rng.next_range(1, 5);
    c.num_layers = rng.next_range(1, 4);
    c.vocab_size = rng.next_range(16, 40);
    c.max_positions = rng.next_range(8, 24);
    if (c.h_inter >= 2 && rng.next_bool()) {
        c.embedding_kind = EmbeddingKind::conv3_factorized;
        c.h_embedding = rng.next_range(1, c.h_inter);
    } else {
        c.embedding_kind = EmbeddingKind::no_op;
        c.h_embedding = c.h_inter;
    }
    c.norm_kind = rng.next_bool() ? NormKind::layer_norm : NormKind::no_norm;
    c.activation_kind = rng.next_bool() ? ActivationKind::gelu : ActivationKind::relu;
    return c;
}

}  // namespace

TEST_CASE("reference presets land on the hand-computed counts") {
    // Backbone = embedding + blocks; frozen from independent arithmetic over
    // the per-layer weight shapes.
    CHECK(count_params(preset("bert_large")).backbone() == 334'067'712);
    CHECK(count_params(preset("bert_base")).backbone() == 108'882'432);
    CHECK(count_params(preset("ib_bert_large")).backbone() == 294'131'456);
    CHECK(count_params(preset("mobilebert")).backbone() == 25'349'888);
    CHECK(count_params(preset("mobilebert_tiny")).backbone() == 15'080'192);

    const auto r = count_params(preset("mobilebert"));
    CHECK(r.total == r.backbone() + r.heads);
    CHECK(r.layer_total() == 874'240);
}

TEST_CASE("preset lookup failure lists the valid names") {
    try {
        preset("mobile_bert");
        FAIL("expected LookupError");
    } catch (const LookupError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("mobilebert") != std::string::npos);
        CHECK(msg.find("bert_large") != std::string::npos);
    }
}

TEST_CASE("preset dimensions match the reference table") {
    const auto mb = preset("mobilebert");
    CHECK(mb.num_layers == 24);
    CHECK(mb.h_inter == 512);
    CHECK(mb.h_intra == 128);
    CHECK(mb.num_heads == 4);
    CHECK(mb.h_ffn == 512);
    CHECK(mb.ffn_stack == 4);
    CHECK(mb.h_embedding == 128);
    CHECK(mb.block_kind == BlockKind::bottleneck);

    const auto ib = preset("ib_bert_large");
    CHECK(ib.num_layers == 24);
    CHECK(ib.h_inter == 512);
    CHECK(ib.h_intra == 1024);
    CHECK(ib.num_heads == 4);
    CHECK(ib.h_ffn == 4096);
    CHECK(ib.block_kind == BlockKind::inverted_bottleneck);

    const auto tiny = preset("mobilebert_tiny");
    CHECK(tiny.ffn_stack == 2);
    CHECK(tiny.block_kind == BlockKind::bottleneck_tiny);
}

TEST_CASE("classic per-layer MHA:FFN weight ratio is exactly 1:2") {
    for (const char* name : {"bert_large", "bert_base"}) {
        const auto r = count_params(preset(name));
        CHECK(2 * r.layer_mha_weights == r.layer_ffn_weights);
    }
}

TEST_CASE("shrinking the teacher inter-block size moves the count as listed") {
    const auto a = count_params(preset("table2_a")).backbone();
    const auto c = count_params(preset("table2_c")).backbone();
    CHECK(std::fabs(static_cast<double>(a) / 356e6 - 1.0) < 0.02);
    CHECK(std::fabs(static_cast<double>(c) / 293e6 - 1.0) < 0.02);
}

TEST_CASE("count_params equals build allocation exactly") {
    for (const char* name : {"table3_128", "table3_96"}) {
        auto cfg = preset(name);
        cfg.num_layers = 2;  // space; the per-layer structure is what matters
        cfg.vocab_size = 64;
        cfg.max_positions = 16;
        const auto r = count_params(cfg);
        const auto m = Model::build(cfg, 1);
        CHECK(r.total == allocated_scalars(m));
    }
    Rng rng(2024);
    for (int i = 0; i < 50; ++i) {
        const auto cfg = random_legal_config(rng);
        const auto r = count_params(cfg);
        const auto m = Model::build(cfg, 7);
        CAPTURE(cfg.to_json());
        CHECK(r.total == allocated_scalars(m));
        CHECK(r.total == r.embedding + r.num_layers * r.layer_total() + r.heads);
    }
}

TEST_CASE("build validates config invariants") {
    auto c = tiny_config(BlockKind::bottleneck);
    c.h_intra = 6;
    c.num_heads = 4;
    CHECK_THROWS_AS(Model::build(c, 1), ConfigError);

    auto classic = tiny_config(BlockKind::classic);
    classic.h_intra = 4;  // must equal h_inter for classic blocks
    CHECK_THROWS_AS(Model::build(classic, 1), ConfigError);

    auto conv = tiny_config(BlockKind::bottleneck);
    conv.h_embedding = conv.h_inter;  // factorization requires a narrower table
    CHECK_THROWS_AS(Model::build(conv, 1), ConfigError);
}

TEST_CASE("build is bitwise deterministic under the seed") {
    const auto cfg = tiny_config(BlockKind::bottleneck);
    const auto a = Model::build(cfg, 99);
    const auto b = Model::build(cfg, 99);
    const auto c = Model::build(cfg, 100);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(a.params()[i].value->data == b.params()[i].value->data);
        any_diff = any_diff || a.params()[i].value->data != c.params()[i].value->data;
    }
    CHECK(any_diff);
}

TEST_CASE("forward obeys the shape contract for every block kind") {
    const std::vector<std::int32_t> tokens = {2, 7, 9, 3};
    const std::vector<std::int32_t> segments = {0, 0, 1, 1};
    for (BlockKind kind : {BlockKind::classic, BlockKind::inverted_bottleneck,
                           BlockKind::bottleneck, BlockKind::bottleneck_tiny}) {
        const auto cfg = tiny_config(kind);
        const auto m = Model::build(cfg, 5);
        const auto r = m.forward(tokens, segments);
        CHECK(r.trace.feature_maps.size() == static_cast<std::size_t>(cfg.num_layers));
        CHECK(r.trace.attentions.size() == static_cast<std::size_t>(cfg.num_layers));
        for (const auto& fm : r.trace.feature_maps) {
            CHECK(fm->shape == Shape{4, cfg.h_inter});
        }
        for (const auto& attn : r.trace.attentions) {
            CHECK(attn->shape == Shape{cfg.num_heads, 4, 4});
            for (std::int64_t row = 0; row < cfg.num_heads * 4; ++row) {
                double sum = 0.0;
                for (std::int64_t col = 0; col < 4; ++col) {
                    sum += attn->data[static_cast<std::size_t>(row * 4 + col)];
                }
                CHECK(std::fabs(sum - 1.0) < 1e-6);
            }
        }
        CHECK(r.logits->shape == Shape{4, cfg.vocab_size});
        CHECK(r.nsp_logits->shape == Shape{1, 2});
        CHECK(r.last_hidden->shape == Shape{4, cfg.h_inter});
    }
}

TEST_CASE("teacher and student traces share feature-map shapes at equal h_inter") {
    auto teacher_cfg = tiny_config(BlockKind::inverted_bottleneck);
    auto student_cfg = tiny_config(BlockKind::bottleneck);
    teacher_cfg.h_intra = 8;
    const auto teacher = Model::build(teacher_cfg, 1);
    const auto student = Model::build(student_cfg, 2);
    const std::vector<std::int32_t> tokens = {5, 6, 7};
    const std::vector<std::int32_t> segments = {0, 0, 0};
    const auto tr = teacher.forward(tokens, segments);
    const auto st = student.forward(tokens, segments);
    for (std::size_t l = 0; l < tr.trace.feature_maps.size(); ++l) {
        CHECK(tr.trace.feature_maps[l]->shape == st.trace.feature_maps[l]->shape);
    }
}

TEST_CASE("forward rejects over-long input") {
    const auto m = Model::build(tiny_config(BlockKind::bottleneck), 3);
    std::vector<std::int32_t> tokens(17, 5);
    std::vector<std::int32_t> segments(17, 0);
    CHECK_THROWS_AS(m.forward(tokens, segments), LengthError);
}

TEST_CASE("attention mask zeroes out padded keys") {
    const auto m = Model::build(tiny_config(BlockKind::bottleneck), 3);
    const std::vector<std::int32_t> tokens = {2, 7, 9, 0, 0};
    const std::vector<std::int32_t> segments = {0, 0, 0, 0, 0};
    const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
    ForwardOptions opts;
    opts.attention_mask = &mask;
    const auto r = m.forward(tokens, segments, opts);
    for (const auto& attn : r.trace.attentions) {
        for (std::int64_t head = 0; head < attn->shape[0]; ++head) {
            for (std::int64_t q = 0; q < 5; ++q) {
                for (std::int64_t k = 3; k < 5; ++k) {
                    CHECK(attn->data[static_cast<std::size_t>((head * 5 + q) * 5 + k)] < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("norm and activation swaps change no shapes and no counts") {
    auto cfg = tiny_config(BlockKind::bottleneck);
    const auto base_count = count_params(cfg).total;
    const auto base = Model::build(cfg, 11);
    const std::vector<std::int32_t> tokens = {5, 6, 7, 8};
    const std::vector<std::int32_t> segments = {0, 0, 1, 1};
    const auto base_result = base.forward(tokens, segments);
    for (NormKind norm : {NormKind::layer_norm, NormKind::no_norm}) {
        for (ActivationKind act : {ActivationKind::gelu, ActivationKind::relu}) {
            auto variant = cfg;
            variant.norm_kind = norm;
            variant.activation_kind = act;
            CHECK(count_params(variant).total == base_count);
            const auto m = Model::build(variant, 11);
            const auto r = m.forward(tokens, segments);
            CHECK(r.logits->shape == base_result.logits->shape);
            CHECK(r.trace.feature_maps[0]->shape == base_result.trace.feature_maps[0]->shape);
        }
    }
}

TEST_CASE("forward is deterministic and safe under concurrent readers") {
    const auto m = Model::build(tiny_config(BlockKind::inverted_bottleneck), 8);
    const std::vector<std::int32_t> tokens = {5, 9, 11, 4};
    const std::vector<std::int32_t> segments = {0, 0, 1, 1};
    const auto reference = m.forward(tokens, segments).logits->data;

    std::vector<std::vector<double>> results(4);
    std::vector<std::thread> threads;
    for (auto& slot : results) {
        threads.emplace_back([&m, &tokens, &segments, &slot] {
            slot = m.forward(tokens, segments).logits->data;
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    for (const auto& r : results) {
        CHECK(r == reference);
    }
}

TEST_CASE("config json round-trips and rejects unknown keys") {
    const auto cfg = preset("mobilebert");
    const auto back = ModelConfig::from_json(cfg.to_json());
    CHECK(back == cfg);
    CHECK_THROWS_AS(ModelConfig::from_json("{\"h_intra\": 128, \"hidden\": 4}"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_json("not json"), ConfigError);
}

TEST_CASE("checkpoints round-trip through the archive") {
    const auto cfg = tiny_config(BlockKind::bottleneck_tiny);
    const auto m = Model::build(cfg, 4);
    Archive a;
    m.save(a);
    const auto back = Model::load(cfg, a);
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(back.params()[i].value->data == m.params()[i].value->data);
    }
    Archive missing;
    CHECK_THROWS_AS(Model::load(cfg, missing), IoError);
}

TEST_CASE("a full tiny block passes the finite-difference check") {
    auto cfg = tiny_config(BlockKind::bottleneck);
    cfg.num_layers = 1;
    auto m = Model::build(cfg, 6);
    // Move off the tightly clustered init point: near-zero activations put
    // the norm denominators at their stiffest, which swamps a 1e-5 central
    // difference with curvature. The check targets the gradient at a
    // well-conditioned point.
    Rng rng(123);
    for (auto& p : m.params()) {
        const bool is_gamma = p.name.ends_with("gamma");
        for (auto& v : p.value->data) {
            v = (is_gamma ? 1.0 : 0.0) + 0.4 * rng.next_normal();
        }
    }
    const std::vector<std::int32_t> tokens = {5, 9, 11};
    const std::vector<std::int32_t> segments = {0, 0, 1};
    std::vector<TensorPtr> inputs;
    for (const auto& p : m.params()) {
        inputs.push_back(p.value);
    }
    const auto report = grad_check(
        "bottleneck block",
        [&] {
            const auto r = m.forward(tokens, segments);
            return add(mean_all(r.logits), mean_all(r.trace.feature_maps[0]));
        },
        inputs, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_err <= 1e-4);
}
