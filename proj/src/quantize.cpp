#include "mbk/quantize.hpp"

#include <cmath>

namespace mbk {

namespace {

/// Settles the scale on a fixpoint of s -> (127*s)/127 so that requantizing
/// dequantized data reproduces bitwise-identical scales.
double normalize_scale(double s) {
    for (int i = 0; i < 4; ++i) {
        const double t = (127.0 * s) / 127.0;
        if (t == s) {
            break;
        }
        s = t;
    }
    return s;
}

}  // namespace

std::vector<double> QuantizedTensor::dequantize() const {
    const auto channels = scales.size();
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i] = static_cast<double>(data[i]) * scales[i % channels];
    }
    return out;
}

QuantizedTensor quantize_tensor(const Shape& shape, const std::vector<double>& values) {
    if (shape.empty() || numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("quantize_tensor: shape " + shape_str(shape) + " vs " +
                         std::to_string(values.size()) + " values");
    }
    QuantizedTensor q;
    q.shape = shape;
    const auto channels = static_cast<std::size_t>(shape.back());
    const std::size_t rows = values.size() / channels;
    q.scales.resize(channels);
    q.data.resize(values.size());
    for (std::size_t c = 0; c < channels; ++c) {
        double amax = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            amax = std::max(amax, std::fabs(values[r * channels + c]));
        }
        q.scales[c] = amax > 0.0 ? normalize_scale(amax / 127.0) : 1.0;
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double scaled = values[r * channels + c] / q.scales[c];
            const auto rounded = std::llround(scaled);
            q.data[r * channels + c] =
                static_cast<std::int8_t>(std::min<long long>(127, std::max<long long>(-127,
                                                                                      rounded)));
        }
    }
    return q;
}

QuantizedModel QuantizedModel::from_model(const Model& model) {
    QuantizedModel qm;
    qm.config_ = model.config();
    for (const auto& p : model.params()) {
        Entry e;
        e.name = p.name;
        if (p.value->shape.size() >= 2) {
            e.quantized = true;
            e.q = quantize_tensor(p.value->shape, p.value->data);
        } else {
            e.shape = p.value->shape;
            e.raw_f32.resize(p.value->data.size());
            for (std::size_t i = 0; i < e.raw_f32.size(); ++i) {
                e.raw_f32[i] = static_cast<float>(p.value->data[i]);
            }
        }
        qm.entries_.push_back(std::move(e));
    }
    return qm;
}

Model QuantizedModel::to_model() const {
    Model m = Model::build(config_, 0);
    for (const auto& e : entries_) {
        auto& target = *m.params()[&e - entries_.data()].value;
        if (m.params()[&e - entries_.data()].name != e.name) {
            throw IoError("quantized model: parameter order mismatch at " + e.name);
        }
        if (e.quantized) {
            target.data = e.q.dequantize();
        } else {
            target.data.resize(e.raw_f32.size());
            for (std::size_t i = 0; i < e.raw_f32.size(); ++i) {
                target.data[i] = static_cast<double>(e.raw_f32[i]);
            }
        }
    }
    return m;
}

ForwardResult QuantizedModel::forward(const std::vector<std::int32_t>& token_ids,
                                      const std::vector<std::int32_t>& segment_ids,
                                      const ForwardOptions& options) const {
    // Dequantize-on-the-fly: weights are materialized per call and dropped
    // with the tape.
    return to_model().forward(token_ids, segment_ids, options);
}

Archive QuantizedModel::to_archive() const {
    Archive a;
    for (const auto& e : entries_) {
        if (e.quantized) {
            a.put_i8(e.name, e.q.shape, e.q.data.data());
            a.put_f64(e.name + ".scales", {static_cast<std::int64_t>(e.q.scales.size())},
                      e.q.scales.data());
        } else {
            a.put_f32(e.name, e.shape, e.raw_f32.data());
        }
    }
    return a;
}

QuantizedModel QuantizedModel::from_archive(const ModelConfig& config, const Archive& archive) {
    QuantizedModel qm;
    qm.config_ = config;
    for (const auto& spec : parameter_plan(config)) {
        const auto* entry = archive.find(spec.name);
        if (!entry) {
            throw IoError("quantized checkpoint: missing tensor '" + spec.name + "'");
        }
        Entry e;
        e.name = spec.name;
        if (entry->dtype == Dtype::i8) {
            const auto* scales = archive.find(spec.name + ".scales");
            if (!scales) {
                throw IoError("quantized checkpoint: missing scales for '" + spec.name + "'");
            }
            e.quantized = true;
            e.q.shape = entry->shape;
            const auto* p = entry->as_i8();
            e.q.data.assign(p, p + entry->count());
            e.q.scales = scales->as_f64();
        } else {
            e.shape = entry->shape;
            e.raw_f32 = entry->as_f32();
        }
        qm.entries_.push_back(std::move(e));
    }
    return qm;
}

QuantizedModel::SizeReport QuantizedModel::size_report() const {
    SizeReport r;
    Archive f32;
    for (const auto& e : entries_) {
        if (e.quantized) {
            std::vector<float> as_float(e.q.data.size());
            const auto deq = e.q.dequantize();
            for (std::size_t i = 0; i < deq.size(); ++i) {
                as_float[i] = static_cast<float>(deq[i]);
            }
            f32.put_f32(e.name, e.q.shape, as_float.data());
        } else {
            f32.put_f32(e.name, e.shape, e.raw_f32.data());
        }
    }
    r.float32_bytes = f32.byte_size();
    r.quantized_bytes = to_archive().byte_size();
    r.ratio = static_cast<double>(r.float32_bytes) / static_cast<double>(r.quantized_bytes);
    return r;
}

}  // namespace mbk
