#pragma once

#include <string>
#include <vector>

#include "mbk/config.hpp"

namespace mbk {

struct BenchVariant {
    NormKind norm_kind = NormKind::layer_norm;
    ActivationKind activation_kind = ActivationKind::gelu;
    double median_s = 0.0;
    double p10_s = 0.0;
    double p90_s = 0.0;
    std::int64_t flops = 0;
};

struct BenchReport {
    std::vector<BenchVariant> variants;  // exactly four
    std::string environment;
};

/// Times single-threaded single-precision forward passes for the four
/// {norm, activation} variants on identical weights and input, interleaving
/// runs round-robin. Requires repeats >= 30; a warmup pass per variant runs
/// before timing. Throws BenchError when the measured medians are too close
/// to the clock granularity to be meaningful.
BenchReport bench_op_variants(const ModelConfig& config, std::int64_t seq_len,
                              std::int64_t repeats, std::uint64_t seed = 42);

void write_bench_csv(const BenchReport& report, const std::string& path);

}  // namespace mbk
