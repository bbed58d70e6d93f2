#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mbk/common.hpp"

namespace mbk {

/// One node of the autodiff tape. Values are row-major doubles; the tape is
/// rebuilt on every forward pass (no graph caching). Nodes are immutable once
/// an op has written them, except for gradient accumulation which the caller
/// serializes.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // sized on first accumulation
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;
    const char* op = "";

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) {
            grad.assign(data.size(), 0.0);
        }
    }
    void zero_grad() {
        if (requires_grad) {
            grad.assign(data.size(), 0.0);
        }
    }
};

using TensorPtr = std::shared_ptr<TensorNode>;

TensorPtr make_tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
TensorPtr zeros(const Shape& shape, bool requires_grad = false);
TensorPtr ones(const Shape& shape, bool requires_grad = false);
TensorPtr full(const Shape& shape, double value, bool requires_grad = false);
TensorPtr scalar(double value, bool requires_grad = false);
TensorPtr randn_trunc(const Shape& shape, double stddev, Rng& rng, bool requires_grad = false);

/// Runs reverse-mode accumulation from a scalar root; gradients land in the
/// `grad` buffers of every reachable node with requires_grad.
void backward(const TensorPtr& root);

// Elementwise arithmetic.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr add_scalar(const TensorPtr& a, double c);

/// x[..., n] + bias[n], broadcast over leading axes.
TensorPtr add_bias(const TensorPtr& x, const TensorPtr& bias);

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
/// a[m,k] * transpose(b[n,k]) -> [m,n]; both operands read row-contiguous.
TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);

TensorPtr relu(const TensorPtr& x);
/// Exact gelu, x * Phi(x) with Phi the standard normal CDF (erf form).
TensorPtr gelu(const TensorPtr& x);
TensorPtr tanh_act(const TensorPtr& x);

/// Numerically stabilized softmax along `axis` (max subtraction). Rejects
/// non-finite input.
TensorPtr softmax(const TensorPtr& x, int axis);

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps = 1e-6);
/// Elementwise affine gamma o x + beta over the trailing axis; no statistics.
TensorPtr nonorm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta);

/// Same-length 1D convolution, kernel width exactly 3, zero padding of one
/// position at each end. x[T,c_in], kernel[3,c_in,c_out], bias[c_out].
TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias);

TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<std::int32_t>& ids);

TensorPtr slice_cols(const TensorPtr& x, std::int64_t start, std::int64_t len);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
/// Stacks K same-shape tensors along a new leading axis.
TensorPtr stack0(const std::vector<TensorPtr>& parts);
/// Selects rows of x[T,n] by index -> [K,n].
TensorPtr gather_rows(const TensorPtr& x, const std::vector<std::int64_t>& rows);

TensorPtr sum_all(const TensorPtr& x);
TensorPtr mean_all(const TensorPtr& x);

/// Inverted dropout; identity when rate == 0 or rng == nullptr.
TensorPtr dropout(const TensorPtr& x, double rate, Rng* rng);

inline TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    return add_bias(matmul(x, w), b);
}

}  // namespace mbk
