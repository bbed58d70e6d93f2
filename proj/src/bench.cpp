#include "mbk/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "mbk/flops.hpp"
#include "mbk/model.hpp"

namespace mbk {

namespace {

using Clock = std::chrono::steady_clock;

/// Single-precision inference engine used only for latency measurement.
class FloatModel {
public:
    FloatModel(const Model& model, NormKind norm, ActivationKind act)
        : c_(model.config()), norm_(norm), act_(act) {
        for (const auto& p : model.params()) {
            auto& dst = weights_[p.name];
            dst.resize(p.value->data.size());
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] = static_cast<float>(p.value->data[i]);
            }
        }
    }

    /// Full forward (embedding, body, pooler); returns a checksum so the
    /// computation cannot be optimized away.
    float forward(const std::vector<std::int32_t>& tokens) const {
        const auto T = static_cast<std::int64_t>(tokens.size());
        const std::int64_t head_dim = c_.h_intra / c_.num_heads;
        const float score_scale = 1.0f / std::sqrt(static_cast<float>(head_dim));

        std::vector<float> h(static_cast<std::size_t>(T * c_.h_inter));
        {
            const float* table = w("embedding.token");
            std::vector<float> e(static_cast<std::size_t>(T * c_.h_embedding));
            for (std::int64_t t = 0; t < T; ++t) {
                std::copy_n(table + tokens[static_cast<std::size_t>(t)] * c_.h_embedding,
                            c_.h_embedding, e.data() + t * c_.h_embedding);
            }
            if (c_.embedding_kind == EmbeddingKind::conv3_factorized) {
                conv3(e.data(), T, c_.h_embedding, c_.h_inter, w("embedding.conv.kernel"),
                      w("embedding.conv.bias"), h.data());
            } else {
                std::copy(e.begin(), e.end(), h.begin());
            }
            const float* pos = w("embedding.position");
            const float* seg = w("embedding.segment");
            for (std::int64_t t = 0; t < T; ++t) {
                float* row = h.data() + t * c_.h_inter;
                const float* prow = pos + t * c_.h_inter;
                for (std::int64_t j = 0; j < c_.h_inter; ++j) {
                    row[j] += prow[j] + seg[j];
                }
            }
            norm_rows(h.data(), T, c_.h_inter, w("embedding.norm.gamma"),
                      w("embedding.norm.beta"));
        }

        const std::int64_t qkv_in =
            c_.block_kind == BlockKind::bottleneck_tiny ? c_.h_intra : c_.h_inter;
        std::vector<float> base(static_cast<std::size_t>(T * c_.h_intra));
        std::vector<float> q(static_cast<std::size_t>(T * c_.h_intra));
        std::vector<float> k(static_cast<std::size_t>(T * c_.h_intra));
        std::vector<float> v(static_cast<std::size_t>(T * c_.h_intra));
        std::vector<float> scores(static_cast<std::size_t>(T * T));
        std::vector<float> ctx(static_cast<std::size_t>(T * c_.h_intra));
        std::vector<float> attn(static_cast<std::size_t>(T * c_.h_intra));
        std::vector<float> mid(static_cast<std::size_t>(T * c_.h_ffn));
        std::vector<float> ffn_out(static_cast<std::size_t>(T * c_.h_intra));
        std::vector<float> up(static_cast<std::size_t>(T * c_.h_inter));

        for (std::int64_t layer = 0; layer < c_.num_layers; ++layer) {
            const std::string p = "layer." + std::to_string(layer) + ".";
            const bool classic = c_.block_kind == BlockKind::classic;
            if (classic) {
                std::copy(h.begin(), h.end(), base.begin());
            } else {
                dense(h.data(), T, c_.h_inter, c_.h_intra, w(p + "in_proj.w"), w(p + "in_proj.b"),
                      base.data());
            }
            const float* src =
                c_.block_kind == BlockKind::bottleneck_tiny ? base.data() : h.data();
            dense(src, T, qkv_in, c_.h_intra, w(p + "mha.q.w"), w(p + "mha.q.b"), q.data());
            dense(src, T, qkv_in, c_.h_intra, w(p + "mha.k.w"), nullptr, k.data());
            dense(src, T, qkv_in, c_.h_intra, w(p + "mha.v.w"), w(p + "mha.v.b"), v.data());

            for (std::int64_t a = 0; a < c_.num_heads; ++a) {
                const std::int64_t off = a * head_dim;
                for (std::int64_t i = 0; i < T; ++i) {
                    const float* qi = q.data() + i * c_.h_intra + off;
                    float* srow = scores.data() + i * T;
                    for (std::int64_t j = 0; j < T; ++j) {
                        const float* kj = k.data() + j * c_.h_intra + off;
                        float s = 0.0f;
                        for (std::int64_t d = 0; d < head_dim; ++d) {
                            s += qi[d] * kj[d];
                        }
                        srow[j] = s * score_scale;
                    }
                }
                softmax_rows(scores.data(), T, T);
                for (std::int64_t i = 0; i < T; ++i) {
                    const float* srow = scores.data() + i * T;
                    float* crow = ctx.data() + i * c_.h_intra + off;
                    std::fill_n(crow, head_dim, 0.0f);
                    for (std::int64_t j = 0; j < T; ++j) {
                        const float sv = srow[j];
                        const float* vj = v.data() + j * c_.h_intra + off;
                        for (std::int64_t d = 0; d < head_dim; ++d) {
                            crow[d] += sv * vj[d];
                        }
                    }
                }
            }

            const float* attn_src = ctx.data();
            if (c_.block_kind != BlockKind::bottleneck_tiny) {
                dense(ctx.data(), T, c_.h_intra, c_.h_intra, w(p + "mha.o.w"), w(p + "mha.o.b"),
                      attn.data());
                attn_src = attn.data();
            }
            for (std::size_t i = 0; i < base.size(); ++i) {
                base[i] += attn_src[i];
            }
            norm_rows(base.data(), T, c_.h_intra, w(p + "mha.norm.gamma"),
                      w(p + "mha.norm.beta"));

            for (std::int64_t f = 0; f < c_.ffn_stack; ++f) {
                const std::string fp = p + "ffn." + std::to_string(f) + ".";
                dense(base.data(), T, c_.h_intra, c_.h_ffn, w(fp + "in.w"), w(fp + "in.b"),
                      mid.data());
                activate(mid.data(), mid.size());
                dense(mid.data(), T, c_.h_ffn, c_.h_intra, w(fp + "out.w"), w(fp + "out.b"),
                      ffn_out.data());
                for (std::size_t i = 0; i < base.size(); ++i) {
                    base[i] += ffn_out[i];
                }
                norm_rows(base.data(), T, c_.h_intra, w(fp + "norm.gamma"), w(fp + "norm.beta"));
            }

            if (classic) {
                std::copy(base.begin(), base.end(), h.begin());
            } else {
                dense(base.data(), T, c_.h_intra, c_.h_inter, w(p + "out_proj.w"),
                      w(p + "out_proj.b"), up.data());
                for (std::size_t i = 0; i < h.size(); ++i) {
                    h[i] += up[i];
                }
                norm_rows(h.data(), T, c_.h_inter, w(p + "block_norm.gamma"),
                          w(p + "block_norm.beta"));
            }
        }

        std::vector<float> pooled(static_cast<std::size_t>(c_.h_inter));
        dense(h.data(), 1, c_.h_inter, c_.h_inter, w("pooler.w"), w("pooler.b"), pooled.data());
        float checksum = 0.0f;
        for (float x : pooled) {
            checksum += std::tanh(x);
        }
        return checksum;
    }

private:
    const float* w(const std::string& name) const {
        auto it = weights_.find(name);
        if (it == weights_.end()) {
            throw LookupError("bench: missing weight " + name);
        }
        return it->second.data();
    }

    static void dense(const float* x, std::int64_t rows, std::int64_t in, std::int64_t out,
                      const float* wgt, const float* bias, float* y) {
        for (std::int64_t r = 0; r < rows; ++r) {
            float* yrow = y + r * out;
            if (bias) {
                std::copy_n(bias, out, yrow);
            } else {
                std::fill_n(yrow, out, 0.0f);
            }
            const float* xrow = x + r * in;
            for (std::int64_t p = 0; p < in; ++p) {
                const float xv = xrow[p];
                const float* wrow = wgt + p * out;
                for (std::int64_t j = 0; j < out; ++j) {
                    yrow[j] += xv * wrow[j];
                }
            }
        }
    }

    static void conv3(const float* x, std::int64_t T, std::int64_t cin, std::int64_t cout,
                      const float* kernel, const float* bias, float* y) {
        for (std::int64_t t = 0; t < T; ++t) {
            float* yrow = y + t * cout;
            std::copy_n(bias, cout, yrow);
            for (std::int64_t dt = 0; dt < 3; ++dt) {
                const std::int64_t s = t + dt - 1;
                if (s < 0 || s >= T) {
                    continue;
                }
                const float* xrow = x + s * cin;
                for (std::int64_t c = 0; c < cin; ++c) {
                    const float xv = xrow[c];
                    const float* krow = kernel + (dt * cin + c) * cout;
                    for (std::int64_t j = 0; j < cout; ++j) {
                        yrow[j] += xv * krow[j];
                    }
                }
            }
        }
    }

    static void softmax_rows(float* x, std::int64_t rows, std::int64_t n) {
        for (std::int64_t r = 0; r < rows; ++r) {
            float* row = x + r * n;
            float mx = row[0];
            for (std::int64_t j = 1; j < n; ++j) {
                mx = std::max(mx, row[j]);
            }
            float sum = 0.0f;
            for (std::int64_t j = 0; j < n; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            const float inv = 1.0f / sum;
            for (std::int64_t j = 0; j < n; ++j) {
                row[j] *= inv;
            }
        }
    }

    void norm_rows(float* x, std::int64_t rows, std::int64_t n, const float* gamma,
                   const float* beta) const {
        if (norm_ == NormKind::no_norm) {
            for (std::int64_t r = 0; r < rows; ++r) {
                float* row = x + r * n;
                for (std::int64_t j = 0; j < n; ++j) {
                    row[j] = row[j] * gamma[j] + beta[j];
                }
            }
            return;
        }
        for (std::int64_t r = 0; r < rows; ++r) {
            float* row = x + r * n;
            float mean = 0.0f;
            for (std::int64_t j = 0; j < n; ++j) {
                mean += row[j];
            }
            mean /= static_cast<float>(n);
            float var = 0.0f;
            for (std::int64_t j = 0; j < n; ++j) {
                const float c = row[j] - mean;
                var += c * c;
            }
            var /= static_cast<float>(n);
            const float inv = 1.0f / std::sqrt(var + 1e-6f);
            for (std::int64_t j = 0; j < n; ++j) {
                row[j] = (row[j] - mean) * inv * gamma[j] + beta[j];
            }
        }
    }

    void activate(float* x, std::size_t n) const {
        if (act_ == ActivationKind::relu) {
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = x[i] > 0.0f ? x[i] : 0.0f;
            }
            return;
        }
        constexpr float inv_sqrt2 = 0.7071067811865475f;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = 0.5f * x[i] * (1.0f + std::erf(x[i] * inv_sqrt2));
        }
    }

    ModelConfig c_;
    NormKind norm_;
    ActivationKind act_;
    std::unordered_map<std::string, std::vector<float>> weights_;
};

double clock_granularity() {
    double best = 1.0;
    auto prev = Clock::now();
    for (int i = 0; i < 1000; ++i) {
        const auto now = Clock::now();
        const double d = std::chrono::duration<double>(now - prev).count();
        if (d > 0.0) {
            best = std::min(best, d);
            prev = now;
        }
    }
    return best;
}

double percentile(std::vector<double> sorted, double p) {
    const auto idx = static_cast<std::size_t>(p * static_cast<double>(sorted.size() - 1));
    return sorted[idx];
}

volatile float g_bench_sink = 0.0f;

}  // namespace

BenchReport bench_op_variants(const ModelConfig& config, std::int64_t seq_len,
                              std::int64_t repeats, std::uint64_t seed) {
    if (repeats < 30) {
        throw ConfigError("bench_op_variants: repeats must be at least 30");
    }
    config.validate();
    if (seq_len > config.max_positions) {
        throw ConfigError("bench_op_variants: seq_len exceeds max_positions");
    }

    const Model model = Model::build(config, seed);
    auto rng = Rng::stream(seed, "bench-input");
    std::vector<std::int32_t> tokens(static_cast<std::size_t>(seq_len));
    for (auto& t : tokens) {
        t = static_cast<std::int32_t>(rng.next_range(5, config.vocab_size));
    }

    const std::pair<NormKind, ActivationKind> kinds[4] = {
        {NormKind::no_norm, ActivationKind::relu},
        {NormKind::no_norm, ActivationKind::gelu},
        {NormKind::layer_norm, ActivationKind::relu},
        {NormKind::layer_norm, ActivationKind::gelu},
    };
    std::vector<FloatModel> engines;
    engines.reserve(4);
    for (const auto& [norm, act] : kinds) {
        engines.emplace_back(model, norm, act);
    }

    for (const auto& engine : engines) {
        for (int i = 0; i < 3; ++i) {
            g_bench_sink = g_bench_sink + engine.forward(tokens);
        }
    }

    // Round-robin over the variants so slow drift hits all of them equally.
    std::vector<std::vector<double>> samples(4);
    for (std::int64_t r = 0; r < repeats; ++r) {
        for (std::size_t k = 0; k < 4; ++k) {
            const auto start = Clock::now();
            g_bench_sink = g_bench_sink + engines[k].forward(tokens);
            const auto stop = Clock::now();
            samples[k].push_back(std::chrono::duration<double>(stop - start).count());
        }
    }

    const double granularity = clock_granularity();
    const std::int64_t flops = estimate_flops(config, seq_len);
    BenchReport report;
    report.environment = std::string("single-thread steady_clock, compiler ") + __VERSION__;
    for (std::size_t k = 0; k < 4; ++k) {
        std::sort(samples[k].begin(), samples[k].end());
        BenchVariant v;
        v.norm_kind = kinds[k].first;
        v.activation_kind = kinds[k].second;
        v.median_s = samples[k][samples[k].size() / 2];
        v.p10_s = percentile(samples[k], 0.10);
        v.p90_s = percentile(samples[k], 0.90);
        v.flops = flops;
        if (v.median_s < 100.0 * granularity) {
            throw BenchError(
                "bench_op_variants: median latency is within 100x of the clock granularity; "
                "use a larger sequence length or configuration");
        }
        report.variants.push_back(v);
    }
    return report;
}

void write_bench_csv(const BenchReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out << "variant,norm,activation,median_s,p10_s,p90_s,flops\n";
    out.precision(9);
    for (const auto& v : report.variants) {
        out << to_string(v.norm_kind) << '&' << to_string(v.activation_kind) << ','
            << to_string(v.norm_kind) << ',' << to_string(v.activation_kind) << ','
            << std::fixed << v.median_s << ',' << v.p10_s << ',' << v.p90_s << ','
            << v.flops << '\n';
        out.unsetf(std::ios_base::fixed);
    }
}

}  // namespace mbk
