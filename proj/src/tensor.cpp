#include "mbk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace mbk {

namespace {

bool any_grad(const std::vector<TensorPtr>& ps) {
    for (const auto& p : ps) {
        if (p && p->requires_grad) {
            return true;
        }
    }
    return false;
}

TensorPtr make_op(Shape shape, std::vector<double> data, std::vector<TensorPtr> parents,
                  const char* op) {
    auto out = std::make_shared<TensorNode>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    out->parents = std::move(parents);
    out->requires_grad = any_grad(out->parents);
    out->op = op;
    return out;
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) {
        throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
}

}  // namespace

TensorPtr make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("make_tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    auto t = std::make_shared<TensorNode>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr zeros(const Shape& shape, bool requires_grad) {
    return make_tensor(shape, std::vector<double>(static_cast<std::size_t>(numel(shape)), 0.0),
                       requires_grad);
}

TensorPtr ones(const Shape& shape, bool requires_grad) {
    return full(shape, 1.0, requires_grad);
}

TensorPtr full(const Shape& shape, double value, bool requires_grad) {
    return make_tensor(shape, std::vector<double>(static_cast<std::size_t>(numel(shape)), value),
                       requires_grad);
}

TensorPtr scalar(double value, bool requires_grad) {
    return make_tensor({1}, {value}, requires_grad);
}

TensorPtr randn_trunc(const Shape& shape, double stddev, Rng& rng, bool requires_grad) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)));
    for (auto& v : d) {
        v = rng.next_trunc_normal(stddev);
    }
    return make_tensor(shape, std::move(d), requires_grad);
}

void backward(const TensorPtr& root) {
    if (!root) {
        throw ContractError("backward: null root");
    }
    if (root->size() != 1) {
        throw ContractError("backward: root must be scalar, got " + shape_str(root->shape));
    }
    if (!root->requires_grad) {
        return;
    }

    // Iterative post-order topo sort; pruned at nodes that need no grads.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        if ((*it)->backward_fn) {
            (*it)->backward_fn(**it);
        }
    }
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "add");
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a->data[i] + b->data[i];
    }
    auto out = make_op(a->shape, std::move(d), {a, b}, "add");
    if (out->requires_grad) {
        out->backward_fn = [a, b](TensorNode& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    a->grad[i] += o.grad[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    b->grad[i] += o.grad[i];
                }
            }
        };
    }
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a->data[i] - b->data[i];
    }
    auto out = make_op(a->shape, std::move(d), {a, b}, "sub");
    if (out->requires_grad) {
        out->backward_fn = [a, b](TensorNode& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    a->grad[i] += o.grad[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    b->grad[i] -= o.grad[i];
                }
            }
        };
    }
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a->data[i] * b->data[i];
    }
    auto out = make_op(a->shape, std::move(d), {a, b}, "mul");
    if (out->requires_grad) {
        out->backward_fn = [a, b](TensorNode& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    a->grad[i] += b->data[i] * o.grad[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    b->grad[i] += a->data[i] * o.grad[i];
                }
            }
        };
    }
    return out;
}

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a->data[i] * c;
    }
    auto out = make_op(a->shape, std::move(d), {a}, "scale");
    if (out->requires_grad) {
        out->backward_fn = [a, c](TensorNode& o) {
            a->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                a->grad[i] += c * o.grad[i];
            }
        };
    }
    return out;
}

TensorPtr add_scalar(const TensorPtr& a, double c) {
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a->data[i] + c;
    }
    auto out = make_op(a->shape, std::move(d), {a}, "add_scalar");
    if (out->requires_grad) {
        out->backward_fn = [a](TensorNode& o) {
            a->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                a->grad[i] += o.grad[i];
            }
        };
    }
    return out;
}

TensorPtr add_bias(const TensorPtr& x, const TensorPtr& bias) {
    if (bias->shape.size() != 1 || x->shape.empty() || x->shape.back() != bias->shape[0]) {
        throw ShapeError("add_bias: x " + shape_str(x->shape) + " vs bias " +
                         shape_str(bias->shape));
    }
    const auto n = static_cast<std::size_t>(bias->shape[0]);
    const std::size_t rows = x->data.size() / n;
    std::vector<double> d(x->data.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        for (std::size_t j = 0; j < n; ++j) {
            d[base + j] = x->data[base + j] + bias->data[j];
        }
    }
    auto out = make_op(x->shape, std::move(d), {x, bias}, "add_bias");
    if (out->requires_grad) {
        out->backward_fn = [x, bias, rows, n](TensorNode& o) {
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    x->grad[i] += o.grad[i];
                }
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t base = r * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        bias->grad[j] += o.grad[base + j];
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2) {
        throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a->shape) + " and " +
                         shape_str(b->shape));
    }
    const std::int64_t m = a->shape[0];
    const std::int64_t k = a->shape[1];
    const std::int64_t n = b->shape[1];
    if (b->shape[0] != k) {
        throw ShapeError("matmul: inner extents disagree: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> d(static_cast<std::size_t>(m * n), 0.0);
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    for (std::int64_t i = 0; i < m; ++i) {
        double* orow = d.data() + i * n;
        const double* arow = ad + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = bd + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    auto out = make_op({m, n}, std::move(d), {a, b}, "matmul");
    if (out->requires_grad) {
        out->backward_fn = [a, b, m, k, n](TensorNode& o) {
            const double* g = o.grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                // dA = g * B^T
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* grow = g + i * n;
                    double* garow = a->grad.data() + i * k;
                    for (std::int64_t p = 0; p < k; ++p) {
                        const double* brow = b->data.data() + p * n;
                        double s = 0.0;
                        for (std::int64_t j = 0; j < n; ++j) {
                            s += grow[j] * brow[j];
                        }
                        garow[p] += s;
                    }
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                // dB = A^T * g
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* arow = a->data.data() + i * k;
                    const double* grow = g + i * n;
                    for (std::int64_t p = 0; p < k; ++p) {
                        const double av = arow[p];
                        double* gbrow = b->grad.data() + p * n;
                        for (std::int64_t j = 0; j < n; ++j) {
                            gbrow[j] += av * grow[j];
                        }
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2) {
        throw ShapeError("matmul_nt: expects rank-2 operands, got " + shape_str(a->shape) +
                         " and " + shape_str(b->shape));
    }
    const std::int64_t m = a->shape[0];
    const std::int64_t k = a->shape[1];
    const std::int64_t n = b->shape[0];
    if (b->shape[1] != k) {
        throw ShapeError("matmul_nt: inner extents disagree: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> d(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a->data.data() + i * k;
        double* orow = d.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = b->data.data() + j * k;
            double s = 0.0;
            for (std::int64_t p = 0; p < k; ++p) {
                s += arow[p] * brow[p];
            }
            orow[j] = s;
        }
    }
    auto out = make_op({m, n}, std::move(d), {a, b}, "matmul_nt");
    if (out->requires_grad) {
        out->backward_fn = [a, b, m, k, n](TensorNode& o) {
            const double* g = o.grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                // dA[i,:] += sum_j g[i,j] * B[j,:]
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* grow = g + i * n;
                    double* garow = a->grad.data() + i * k;
                    for (std::int64_t j = 0; j < n; ++j) {
                        const double gv = grow[j];
                        const double* brow = b->data.data() + j * k;
                        for (std::int64_t p = 0; p < k; ++p) {
                            garow[p] += gv * brow[p];
                        }
                    }
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                // dB[j,:] += sum_i g[i,j] * A[i,:]
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* grow = g + i * n;
                    const double* arow = a->data.data() + i * k;
                    for (std::int64_t j = 0; j < n; ++j) {
                        const double gv = grow[j];
                        double* gbrow = b->grad.data() + j * k;
                        for (std::int64_t p = 0; p < k; ++p) {
                            gbrow[p] += gv * arow[p];
                        }
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr relu(const TensorPtr& x) {
    std::vector<double> d(x->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    }
    auto out = make_op(x->shape, std::move(d), {x}, "relu");
    if (out->requires_grad) {
        out->backward_fn = [x](TensorNode& o) {
            x->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                if (x->data[i] > 0.0) {
                    x->grad[i] += o.grad[i];
                }
            }
        };
    }
    return out;
}

TensorPtr gelu(const TensorPtr& x) {
    std::vector<double> d(x->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double v = x->data[i];
        d[i] = v * 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    }
    auto out = make_op(x->shape, std::move(d), {x}, "gelu");
    if (out->requires_grad) {
        out->backward_fn = [x](TensorNode& o) {
            x->ensure_grad();
            constexpr double inv_sqrt_2pi = 0.3989422804014327;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const double v = x->data[i];
                const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                x->grad[i] += (cdf + v * pdf) * o.grad[i];
            }
        };
    }
    return out;
}

TensorPtr tanh_act(const TensorPtr& x) {
    std::vector<double> d(x->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = std::tanh(x->data[i]);
    }
    auto out = make_op(x->shape, std::move(d), {x}, "tanh");
    if (out->requires_grad) {
        out->backward_fn = [x](TensorNode& o) {
            x->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                x->grad[i] += (1.0 - o.data[i] * o.data[i]) * o.grad[i];
            }
        };
    }
    return out;
}

TensorPtr softmax(const TensorPtr& x, int axis) {
    const int rank = static_cast<int>(x->shape.size());
    if (axis < 0) {
        axis += rank;
    }
    if (axis < 0 || axis >= rank) {
        throw ShapeError("softmax: axis out of range for " + shape_str(x->shape));
    }
    for (double v : x->data) {
        if (!std::isfinite(v)) {
            throw DomainError("softmax: non-finite input");
        }
    }
    const std::int64_t n = x->shape[static_cast<std::size_t>(axis)];
    std::int64_t inner = 1;
    for (int i = axis + 1; i < rank; ++i) {
        inner *= x->shape[static_cast<std::size_t>(i)];
    }
    const std::int64_t outer = x->size() / (n * inner);

    std::vector<double> d(x->data.size());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            double mx = x->data[static_cast<std::size_t>(base)];
            for (std::int64_t j = 1; j < n; ++j) {
                mx = std::max(mx, x->data[static_cast<std::size_t>(base + j * inner)]);
            }
            double sum = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                const double e = std::exp(x->data[static_cast<std::size_t>(base + j * inner)] - mx);
                d[static_cast<std::size_t>(base + j * inner)] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (std::int64_t j = 0; j < n; ++j) {
                d[static_cast<std::size_t>(base + j * inner)] *= inv;
            }
        }
    }
    auto out = make_op(x->shape, std::move(d), {x}, "softmax");
    if (out->requires_grad) {
        out->backward_fn = [x, outer, n, inner](TensorNode& o) {
            x->ensure_grad();
            for (std::int64_t ot = 0; ot < outer; ++ot) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = ot * n * inner + in;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) {
                        const auto idx = static_cast<std::size_t>(base + j * inner);
                        dot += o.grad[idx] * o.data[idx];
                    }
                    for (std::int64_t j = 0; j < n; ++j) {
                        const auto idx = static_cast<std::size_t>(base + j * inner);
                        x->grad[idx] += o.data[idx] * (o.grad[idx] - dot);
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
    if (x->shape.empty() || gamma->shape.size() != 1 || beta->shape.size() != 1 ||
        gamma->shape[0] != x->shape.back() || beta->shape[0] != x->shape.back()) {
        throw ShapeError("layer_norm: x " + shape_str(x->shape) + ", gamma " +
                         shape_str(gamma->shape) + ", beta " + shape_str(beta->shape));
    }
    const auto n = static_cast<std::size_t>(x->shape.back());
    const std::size_t rows = x->data.size() / n;
    std::vector<double> d(x->data.size());
    std::vector<double> xhat(x->data.size());
    std::vector<double> invstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x->data.data() + r * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mean += xr[j];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        invstd[r] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xr[j] - mean) * inv;
            xhat[r * n + j] = h;
            d[r * n + j] = h * gamma->data[j] + beta->data[j];
        }
    }
    auto out = make_op(x->shape, std::move(d), {x, gamma, beta}, "layer_norm");
    if (out->requires_grad) {
        out->backward_fn = [x, gamma, beta, rows, n, xhat = std::move(xhat),
                            invstd = std::move(invstd)](TensorNode& o) {
            if (beta->requires_grad) {
                beta->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < n; ++j) {
                        beta->grad[j] += o.grad[r * n + j];
                    }
                }
            }
            if (gamma->requires_grad) {
                gamma->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gamma->grad[j] += o.grad[r * n + j] * xhat[r * n + j];
                    }
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                const double invn = 1.0 / static_cast<double>(n);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_gh = 0.0;
                    double mean_ghx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gh = o.grad[r * n + j] * gamma->data[j];
                        mean_gh += gh;
                        mean_ghx += gh * xhat[r * n + j];
                    }
                    mean_gh *= invn;
                    mean_ghx *= invn;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gh = o.grad[r * n + j] * gamma->data[j];
                        x->grad[r * n + j] +=
                            invstd[r] * (gh - mean_gh - xhat[r * n + j] * mean_ghx);
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr nonorm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta) {
    if (x->shape.empty() || gamma->shape.size() != 1 || beta->shape.size() != 1 ||
        gamma->shape[0] != x->shape.back() || beta->shape[0] != x->shape.back()) {
        throw ShapeError("nonorm: x " + shape_str(x->shape) + ", gamma " + shape_str(gamma->shape) +
                         ", beta " + shape_str(beta->shape));
    }
    const auto n = static_cast<std::size_t>(x->shape.back());
    const std::size_t rows = x->data.size() / n;
    std::vector<double> d(x->data.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            d[r * n + j] = x->data[r * n + j] * gamma->data[j] + beta->data[j];
        }
    }
    auto out = make_op(x->shape, std::move(d), {x, gamma, beta}, "nonorm");
    if (out->requires_grad) {
        out->backward_fn = [x, gamma, beta, rows, n](TensorNode& o) {
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < n; ++j) {
                        x->grad[r * n + j] += o.grad[r * n + j] * gamma->data[j];
                    }
                }
            }
            if (gamma->requires_grad) {
                gamma->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gamma->grad[j] += o.grad[r * n + j] * x->data[r * n + j];
                    }
                }
            }
            if (beta->requires_grad) {
                beta->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < n; ++j) {
                        beta->grad[j] += o.grad[r * n + j];
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias) {
    if (kernel->shape.size() != 3 || kernel->shape[0] != 3) {
        throw ConfigError("conv1d_same: kernel width must be exactly 3, got " +
                          shape_str(kernel->shape));
    }
    if (x->shape.size() != 2 || x->shape[1] != kernel->shape[1]) {
        throw ShapeError("conv1d_same: x " + shape_str(x->shape) + " vs kernel " +
                         shape_str(kernel->shape));
    }
    const std::int64_t T = x->shape[0];
    const std::int64_t cin = kernel->shape[1];
    const std::int64_t cout = kernel->shape[2];
    if (T < 1) {
        throw ShapeError("conv1d_same: sequence length must be >= 1");
    }
    if (bias->shape != Shape{cout}) {
        throw ShapeError("conv1d_same: bias " + shape_str(bias->shape) + " vs c_out " +
                         std::to_string(cout));
    }
    std::vector<double> d(static_cast<std::size_t>(T * cout));
    for (std::int64_t t = 0; t < T; ++t) {
        double* orow = d.data() + t * cout;
        for (std::int64_t j = 0; j < cout; ++j) {
            orow[j] = bias->data[static_cast<std::size_t>(j)];
        }
        for (std::int64_t dt = 0; dt < 3; ++dt) {
            const std::int64_t s = t + dt - 1;
            if (s < 0 || s >= T) {
                continue;
            }
            const double* xrow = x->data.data() + s * cin;
            for (std::int64_t c = 0; c < cin; ++c) {
                const double xv = xrow[c];
                const double* krow = kernel->data.data() + (dt * cin + c) * cout;
                for (std::int64_t j = 0; j < cout; ++j) {
                    orow[j] += xv * krow[j];
                }
            }
        }
    }
    auto out = make_op({T, cout}, std::move(d), {x, kernel, bias}, "conv1d_same");
    if (out->requires_grad) {
        out->backward_fn = [x, kernel, bias, T, cin, cout](TensorNode& o) {
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::int64_t t = 0; t < T; ++t) {
                    for (std::int64_t j = 0; j < cout; ++j) {
                        bias->grad[static_cast<std::size_t>(j)] +=
                            o.grad[static_cast<std::size_t>(t * cout + j)];
                    }
                }
            }
            for (std::int64_t t = 0; t < T; ++t) {
                const double* grow = o.grad.data() + t * cout;
                for (std::int64_t dt = 0; dt < 3; ++dt) {
                    const std::int64_t s = t + dt - 1;
                    if (s < 0 || s >= T) {
                        continue;
                    }
                    if (x->requires_grad) {
                        x->ensure_grad();
                        for (std::int64_t c = 0; c < cin; ++c) {
                            const double* krow = kernel->data.data() + (dt * cin + c) * cout;
                            double sgrad = 0.0;
                            for (std::int64_t j = 0; j < cout; ++j) {
                                sgrad += grow[j] * krow[j];
                            }
                            x->grad[static_cast<std::size_t>(s * cin + c)] += sgrad;
                        }
                    }
                    if (kernel->requires_grad) {
                        kernel->ensure_grad();
                        const double* xrow = x->data.data() + s * cin;
                        for (std::int64_t c = 0; c < cin; ++c) {
                            double* kgrow = kernel->grad.data() + (dt * cin + c) * cout;
                            const double xv = xrow[c];
                            for (std::int64_t j = 0; j < cout; ++j) {
                                kgrow[j] += xv * grow[j];
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<std::int32_t>& ids) {
    if (table->shape.size() != 2) {
        throw ShapeError("embedding_lookup: table must be rank 2, got " + shape_str(table->shape));
    }
    const std::int64_t V = table->shape[0];
    const std::int64_t E = table->shape[1];
    const auto T = static_cast<std::int64_t>(ids.size());
    std::vector<double> d(static_cast<std::size_t>(T * E));
    for (std::int64_t t = 0; t < T; ++t) {
        const std::int32_t id = ids[static_cast<std::size_t>(t)];
        if (id < 0 || id >= V) {
            throw DomainError("embedding_lookup: id " + std::to_string(id) +
                              " out of range for vocab " + std::to_string(V));
        }
        std::copy_n(table->data.data() + static_cast<std::int64_t>(id) * E, E, d.data() + t * E);
    }
    auto out = make_op({T, E}, std::move(d), {table}, "embedding");
    if (out->requires_grad) {
        out->backward_fn = [table, ids, E](TensorNode& o) {
            table->ensure_grad();
            for (std::size_t t = 0; t < ids.size(); ++t) {
                double* trow = table->grad.data() + static_cast<std::int64_t>(ids[t]) * E;
                const double* grow = o.grad.data() + static_cast<std::int64_t>(t) * E;
                for (std::int64_t j = 0; j < E; ++j) {
                    trow[j] += grow[j];
                }
            }
        };
    }
    return out;
}

TensorPtr slice_cols(const TensorPtr& x, std::int64_t start, std::int64_t len) {
    if (x->shape.size() != 2 || start < 0 || len < 1 || start + len > x->shape[1]) {
        throw ShapeError("slice_cols: [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") of " + shape_str(x->shape));
    }
    const std::int64_t rows = x->shape[0];
    const std::int64_t n = x->shape[1];
    std::vector<double> d(static_cast<std::size_t>(rows * len));
    for (std::int64_t r = 0; r < rows; ++r) {
        std::copy_n(x->data.data() + r * n + start, len, d.data() + r * len);
    }
    auto out = make_op({rows, len}, std::move(d), {x}, "slice_cols");
    if (out->requires_grad) {
        out->backward_fn = [x, start, len, rows, n](TensorNode& o) {
            x->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* grow = o.grad.data() + r * len;
                double* xrow = x->grad.data() + r * n + start;
                for (std::int64_t j = 0; j < len; ++j) {
                    xrow[j] += grow[j];
                }
            }
        };
    }
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no parts");
    }
    const std::int64_t rows = parts[0]->shape[0];
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != 2 || p->shape[0] != rows) {
            throw ShapeError("concat_cols: inconsistent part shape " + shape_str(p->shape));
        }
        total += p->shape[1];
    }
    std::vector<double> d(static_cast<std::size_t>(rows * total));
    std::int64_t off = 0;
    for (const auto& p : parts) {
        const std::int64_t n = p->shape[1];
        for (std::int64_t r = 0; r < rows; ++r) {
            std::copy_n(p->data.data() + r * n, n, d.data() + r * total + off);
        }
        off += n;
    }
    auto out = make_op({rows, total}, std::move(d), parts, "concat_cols");
    if (out->requires_grad) {
        out->backward_fn = [parts, rows, total](TensorNode& o) {
            std::int64_t off = 0;
            for (const auto& p : parts) {
                const std::int64_t n = p->shape[1];
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::int64_t r = 0; r < rows; ++r) {
                        const double* grow = o.grad.data() + r * total + off;
                        double* prow = p->grad.data() + r * n;
                        for (std::int64_t j = 0; j < n; ++j) {
                            prow[j] += grow[j];
                        }
                    }
                }
                off += n;
            }
        };
    }
    return out;
}

TensorPtr stack0(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) {
        throw ShapeError("stack0: no parts");
    }
    const Shape inner = parts[0]->shape;
    const std::int64_t step = numel(inner);
    for (const auto& p : parts) {
        if (p->shape != inner) {
            throw ShapeError("stack0: inconsistent part shape " + shape_str(p->shape));
        }
    }
    Shape shape;
    shape.push_back(static_cast<std::int64_t>(parts.size()));
    shape.insert(shape.end(), inner.begin(), inner.end());
    std::vector<double> d(static_cast<std::size_t>(step) * parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::copy_n(parts[i]->data.data(), step, d.data() + static_cast<std::int64_t>(i) * step);
    }
    auto out = make_op(std::move(shape), std::move(d), parts, "stack0");
    if (out->requires_grad) {
        out->backward_fn = [parts, step](TensorNode& o) {
            for (std::size_t i = 0; i < parts.size(); ++i) {
                if (!parts[i]->requires_grad) {
                    continue;
                }
                parts[i]->ensure_grad();
                const double* g = o.grad.data() + static_cast<std::int64_t>(i) * step;
                for (std::int64_t j = 0; j < step; ++j) {
                    parts[i]->grad[static_cast<std::size_t>(j)] += g[j];
                }
            }
        };
    }
    return out;
}

TensorPtr gather_rows(const TensorPtr& x, const std::vector<std::int64_t>& rows) {
    if (x->shape.size() != 2) {
        throw ShapeError("gather_rows: expects rank-2 input, got " + shape_str(x->shape));
    }
    const std::int64_t T = x->shape[0];
    const std::int64_t n = x->shape[1];
    const auto K = static_cast<std::int64_t>(rows.size());
    std::vector<double> d(static_cast<std::size_t>(K * n));
    for (std::int64_t k = 0; k < K; ++k) {
        const std::int64_t r = rows[static_cast<std::size_t>(k)];
        if (r < 0 || r >= T) {
            throw ShapeError("gather_rows: row " + std::to_string(r) + " out of " +
                             std::to_string(T));
        }
        std::copy_n(x->data.data() + r * n, n, d.data() + k * n);
    }
    auto out = make_op({K, n}, std::move(d), {x}, "gather_rows");
    if (out->requires_grad) {
        out->backward_fn = [x, rows, n](TensorNode& o) {
            x->ensure_grad();
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const double* grow = o.grad.data() + static_cast<std::int64_t>(k) * n;
                double* xrow = x->grad.data() + rows[k] * n;
                for (std::int64_t j = 0; j < n; ++j) {
                    xrow[j] += grow[j];
                }
            }
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& x) {
    double s = 0.0;
    for (double v : x->data) {
        s += v;
    }
    auto out = make_op({1}, {s}, {x}, "sum");
    if (out->requires_grad) {
        out->backward_fn = [x](TensorNode& o) {
            x->ensure_grad();
            const double g = o.grad[0];
            for (auto& gv : x->grad) {
                gv += g;
            }
        };
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x->size()));
}

TensorPtr dropout(const TensorPtr& x, double rate, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout: rate must lie in [0,1)");
    }
    if (rate == 0.0 || rng == nullptr) {
        return x;
    }
    const double keep = 1.0 - rate;
    const double inv = 1.0 / keep;
    std::vector<double> mask(x->data.size());
    std::vector<double> d(x->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double m = rng->next_unit() < keep ? inv : 0.0;
        mask[i] = m;
        d[i] = x->data[i] * m;
    }
    auto out = make_op(x->shape, std::move(d), {x}, "dropout");
    if (out->requires_grad) {
        out->backward_fn = [x, mask = std::move(mask)](TensorNode& o) {
            x->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                x->grad[i] += o.grad[i] * mask[i];
            }
        };
    }
    return out;
}

}  // namespace mbk
