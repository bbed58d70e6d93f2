#pragma once

#include "mbk/model.hpp"

namespace mbk {

/// Symmetric weight-only int8 quantization: one scale per output channel
/// (trailing axis), zero point fixed at 0. An all-zero channel gets the
/// sentinel scale 1.0.
struct QuantizedTensor {
    Shape shape;
    std::vector<std::int8_t> data;  // row-major
    std::vector<double> scales;     // one per trailing-axis channel

    std::vector<double> dequantize() const;
};

QuantizedTensor quantize_tensor(const Shape& shape, const std::vector<double>& values);

/// A model with every rank >= 2 parameter held as int8 + per-channel scales;
/// rank-1 parameters (biases, norm vectors) stay in float32.
class QuantizedModel {
public:
    static QuantizedModel from_model(const Model& model);

    /// Reconstructs a dense model; forward passes dequantize through this.
    Model to_model() const;
    ForwardResult forward(const std::vector<std::int32_t>& token_ids,
                          const std::vector<std::int32_t>& segment_ids,
                          const ForwardOptions& options = {}) const;

    const ModelConfig& config() const { return config_; }

    Archive to_archive() const;
    static QuantizedModel from_archive(const ModelConfig& config, const Archive& archive);

    struct SizeReport {
        std::size_t float32_bytes = 0;  // same parameters serialized as f32
        std::size_t quantized_bytes = 0;
        double ratio = 0.0;
    };
    SizeReport size_report() const;

private:
    ModelConfig config_;
    struct Entry {
        std::string name;
        bool quantized = false;
        QuantizedTensor q;
        Shape shape;                 // for raw entries
        std::vector<float> raw_f32;  // rank-1 parameters
    };
    std::vector<Entry> entries_;
};

}  // namespace mbk
