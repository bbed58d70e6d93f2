#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mbk {

// Error taxonomy. Each failure mode gets its own type so callers and tests
// can discriminate without parsing messages.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};
class ConfigError : public Error {
public:
    using Error::Error;
};
class DomainError : public Error {
public:
    using Error::Error;
};
class ContractError : public Error {
public:
    using Error::Error;
};
class LookupError : public Error {
public:
    using Error::Error;
};
class LengthError : public Error {
public:
    using Error::Error;
};
class CopyError : public Error {
public:
    using Error::Error;
};
class DataError : public Error {
public:
    using Error::Error;
};
class BenchError : public Error {
public:
    using Error::Error;
};
class IoError : public Error {
public:
    using Error::Error;
};

// Raised when a training run hits a non-finite loss; carries the offending
// stage/step for the CLI diagnostic.
class TrainAbort : public Error {
public:
    TrainAbort(const std::string& msg, std::string stage, std::int64_t step)
        : Error(msg), stage(std::move(stage)), step(step) {}
    std::string stage;
    std::int64_t step = 0;
};

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Deterministic splitmix64 generator. The whole state is one word, which
/// keeps training-state serialization and named sub-streams trivial.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Derives an independent stream from (seed, name); used so init/data/
    /// dropout randomness can be reproduced in isolation.
    static Rng stream(std::uint64_t seed, std::string_view name) {
        return Rng(seed ^ fnv1a64(name));
    }
    /// Stream further keyed by an index (e.g. one stream per training step).
    static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
        Rng r(seed ^ fnv1a64(name));
        r.state_ ^= 0x9E3779B97F4A7C15ULL * (index + 1);
        return r;
    }

    std::uint64_t next_u64();
    double next_unit();    // [0,1)
    double next_normal();  // standard normal
    /// Normal(0, stddev) truncated to two standard deviations, the usual
    /// BERT-style initializer.
    double next_trunc_normal(double stddev);
    /// Uniform integer in [lo, hi).
    std::int64_t next_range(std::int64_t lo, std::int64_t hi);
    bool next_bool() { return (next_u64() & 1) != 0; }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

}  // namespace mbk
