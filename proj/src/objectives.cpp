#include "mbk/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace mbk {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr double kStdEps = 1e-6;

TensorPtr make_loss_node(double value, std::vector<TensorPtr> parents, const char* op,
                         std::function<void(TensorNode&)> backward_fn) {
    auto out = std::make_shared<TensorNode>();
    out->shape = {1};
    out->data = {value};
    out->parents = std::move(parents);
    out->op = op;
    for (const auto& p : out->parents) {
        out->requires_grad = out->requires_grad || p->requires_grad;
    }
    if (out->requires_grad) {
        out->backward_fn = std::move(backward_fn);
    }
    return out;
}

void check_teacher_constant(const TensorPtr& teacher, const char* op) {
    if (teacher->requires_grad) {
        throw ContractError(std::string(op) + ": the teacher side is a constant reference and "
                                              "must not request gradients");
    }
}

void check_fmt_shapes(const TensorPtr& tr, const TensorPtr& st) {
    if (tr->shape != st->shape) {
        throw ShapeError("feature map transfer: teacher map " + shape_str(tr->shape) +
                         " and student map " + shape_str(st->shape) +
                         " differ; layer-wise comparison requires both encoders to share the "
                         "inter-block feature map size");
    }
    if (tr->shape.size() != 2) {
        throw ShapeError("feature map transfer: expected [T,N] maps, got " + shape_str(tr->shape));
    }
}

struct RowStats {
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> inv;   // 1/sqrt(var + eps)
    std::vector<double> norm;  // standardized map, row-major
};

RowStats standardize(const TensorPtr& x, std::size_t rows, std::size_t n) {
    RowStats s;
    s.mean.resize(rows);
    s.var.resize(rows);
    s.inv.resize(rows);
    s.norm.resize(rows * n);
    for (std::size_t t = 0; t < rows; ++t) {
        const double* xr = x->data.data() + t * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += xr[j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = xr[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kStdEps);
        s.mean[t] = mu;
        s.var[t] = var;
        s.inv[t] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            s.norm[t * n + j] = (xr[j] - mu) * inv;
        }
    }
    return s;
}

}  // namespace

void TransferWeights::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie strictly inside (0,1), got " + std::to_string(alpha));
    }
    if (fmt_weight < 0.0 || at_weight < 0.0 || fmt_stats_weight < 0.0) {
        throw ConfigError("transfer weights must be non-negative");
    }
}

TensorPtr raw_fmt_loss(const TensorPtr& teacher_map, const TensorPtr& student_map) {
    check_fmt_shapes(teacher_map, student_map);
    check_teacher_constant(teacher_map, "raw_fmt_loss");
    const auto n_total = static_cast<double>(teacher_map->size());
    double acc = 0.0;
    for (std::size_t i = 0; i < teacher_map->data.size(); ++i) {
        const double d = teacher_map->data[i] - student_map->data[i];
        acc += d * d;
    }
    acc /= n_total;
    return make_loss_node(acc, {teacher_map, student_map}, "raw_fmt_loss",
                          [teacher_map, student_map, n_total](TensorNode& o) {
                              student_map->ensure_grad();
                              const double g = 2.0 * o.grad[0] / n_total;
                              for (std::size_t i = 0; i < student_map->data.size(); ++i) {
                                  student_map->grad[i] +=
                                      g * (student_map->data[i] - teacher_map->data[i]);
                              }
                          });
}

TensorPtr fmt_loss(const TensorPtr& teacher_map, const TensorPtr& student_map,
                   double stats_weight) {
    check_fmt_shapes(teacher_map, student_map);
    check_teacher_constant(teacher_map, "fmt_loss");
    if (stats_weight < 0.0) {
        throw ConfigError("fmt_loss: stats_weight must be non-negative");
    }
    const auto rows = static_cast<std::size_t>(teacher_map->shape[0]);
    const auto n = static_cast<std::size_t>(teacher_map->shape[1]);
    auto tr = standardize(teacher_map, rows, n);
    auto st = standardize(student_map, rows, n);

    double base = 0.0;
    for (std::size_t i = 0; i < tr.norm.size(); ++i) {
        const double d = tr.norm[i] - st.norm[i];
        base += d * d;
    }
    base /= static_cast<double>(rows * n);

    double stats = 0.0;
    for (std::size_t t = 0; t < rows; ++t) {
        const double dm = tr.mean[t] - st.mean[t];
        const double dv = tr.var[t] - st.var[t];
        stats += dm * dm + dv * dv;
    }
    stats /= static_cast<double>(rows);

    const double value = base + stats_weight * stats;
    return make_loss_node(
        value, {teacher_map, student_map}, "fmt_loss",
        [teacher_map, student_map, stats_weight, rows, n, tr = std::move(tr),
         st = std::move(st)](TensorNode& o) {
            student_map->ensure_grad();
            const double g = o.grad[0];
            const double invn = 1.0 / static_cast<double>(n);
            const double base_scale = 2.0 * g / static_cast<double>(rows * n);
            const double stats_scale = 2.0 * g * stats_weight / static_cast<double>(rows);
            for (std::size_t t = 0; t < rows; ++t) {
                // Base term through the per-token standardization Jacobian.
                double mean_gh = 0.0;
                double mean_ghx = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double gh = base_scale * (st.norm[t * n + j] - tr.norm[t * n + j]);
                    mean_gh += gh;
                    mean_ghx += gh * st.norm[t * n + j];
                }
                mean_gh *= invn;
                mean_ghx *= invn;
                const double dmu = stats_scale * (st.mean[t] - tr.mean[t]) * invn;
                const double dvar = stats_scale * (st.var[t] - tr.var[t]);
                for (std::size_t j = 0; j < n; ++j) {
                    const double gh = base_scale * (st.norm[t * n + j] - tr.norm[t * n + j]);
                    const double centered = student_map->data[t * n + j] - st.mean[t];
                    student_map->grad[t * n + j] +=
                        st.inv[t] * (gh - mean_gh - st.norm[t * n + j] * mean_ghx) + dmu +
                        dvar * 2.0 * centered * invn;
                }
            }
        });
}

TensorPtr at_loss(const TensorPtr& teacher_attn, const TensorPtr& student_attn) {
    if (teacher_attn->shape != student_attn->shape) {
        throw ShapeError("at_loss: teacher " + shape_str(teacher_attn->shape) + " vs student " +
                         shape_str(student_attn->shape));
    }
    if (teacher_attn->shape.size() < 2) {
        throw ShapeError("at_loss: expected stacked attention rows, got " +
                         shape_str(teacher_attn->shape));
    }
    check_teacher_constant(teacher_attn, "at_loss");
    const auto cols = static_cast<std::size_t>(teacher_attn->shape.back());
    const std::size_t rows = teacher_attn->data.size() / cols;
    for (const auto* t : {&teacher_attn, &student_attn}) {
        for (std::size_t r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double v = (**t).data[r * cols + j];
                if (v < -1e-9) {
                    throw DomainError("at_loss: negative attention probability");
                }
                sum += v;
            }
            if (std::fabs(sum - 1.0) > 1e-6) {
                throw DomainError("at_loss: attention row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum) + ", not stochastic");
            }
        }
    }

    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double p = teacher_attn->data[r * cols + j];
            const double q = student_attn->data[r * cols + j];
            acc += p * (std::log(std::max(p, kLogFloor)) - std::log(std::max(q, kLogFloor)));
        }
    }
    acc /= static_cast<double>(rows);

    return make_loss_node(acc, {teacher_attn, student_attn}, "at_loss",
                          [teacher_attn, student_attn, rows, cols](TensorNode& o) {
                              student_attn->ensure_grad();
                              const double g = o.grad[0] / static_cast<double>(rows);
                              for (std::size_t i = 0; i < rows * cols; ++i) {
                                  const double q = student_attn->data[i];
                                  if (q > kLogFloor) {
                                      student_attn->grad[i] += -g * teacher_attn->data[i] / q;
                                  }
                              }
                          });
}

TensorPtr layer_kt_loss(const LayerTrace& teacher, const LayerTrace& student, std::int64_t layer,
                        const TransferWeights& weights) {
    weights.validate();
    if (teacher.feature_maps.size() != student.feature_maps.size()) {
        throw ConfigError("layer_kt_loss: teacher has " +
                          std::to_string(teacher.feature_maps.size()) + " layers, student " +
                          std::to_string(student.feature_maps.size()));
    }
    if (layer < 0 || layer >= static_cast<std::int64_t>(teacher.feature_maps.size())) {
        throw LookupError("layer_kt_loss: layer index " + std::to_string(layer) +
                          " out of range for " + std::to_string(teacher.feature_maps.size()) +
                          " layers");
    }
    const auto l = static_cast<std::size_t>(layer);
    auto fmt = fmt_loss(teacher.feature_maps[l], student.feature_maps[l],
                        weights.fmt_stats_weight);
    auto at = at_loss(teacher.attentions[l], student.attentions[l]);
    return add(scale(fmt, weights.fmt_weight), scale(at, weights.at_weight));
}

TensorPtr cross_entropy_labels(const TensorPtr& logits, const std::vector<std::int64_t>& labels) {
    if (logits->shape.size() != 2 ||
        logits->shape[0] != static_cast<std::int64_t>(labels.size())) {
        throw ShapeError("cross_entropy_labels: logits " + shape_str(logits->shape) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    const auto K = static_cast<std::size_t>(logits->shape[0]);
    const auto C = static_cast<std::size_t>(logits->shape[1]);
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto label = labels[k];
        if (label < 0 || label >= static_cast<std::int64_t>(C)) {
            throw DomainError("cross_entropy_labels: label out of range");
        }
        const double* row = logits->data.data() + k * C;
        const double mx = *std::max_element(row, row + C);
        double sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            sum += std::exp(row[j] - mx);
        }
        acc += mx + std::log(sum) - row[static_cast<std::size_t>(label)];
    }
    acc /= static_cast<double>(K);
    return make_loss_node(acc, {logits}, "cross_entropy",
                          [logits, labels, K, C](TensorNode& o) {
                              logits->ensure_grad();
                              const double g = o.grad[0] / static_cast<double>(K);
                              for (std::size_t k = 0; k < K; ++k) {
                                  const double* row = logits->data.data() + k * C;
                                  const double mx = *std::max_element(row, row + C);
                                  double sum = 0.0;
                                  for (std::size_t j = 0; j < C; ++j) {
                                      sum += std::exp(row[j] - mx);
                                  }
                                  const double inv = 1.0 / sum;
                                  for (std::size_t j = 0; j < C; ++j) {
                                      const double p = std::exp(row[j] - mx) * inv;
                                      const double y =
                                          j == static_cast<std::size_t>(labels[k]) ? 1.0 : 0.0;
                                      logits->grad[k * C + j] += g * (p - y);
                                  }
                              }
                          });
}

TensorPtr cross_entropy_soft(const TensorPtr& logits, const TensorPtr& target_probs) {
    if (logits->shape != target_probs->shape || logits->shape.size() != 2) {
        throw ShapeError("cross_entropy_soft: logits " + shape_str(logits->shape) +
                         " vs targets " + shape_str(target_probs->shape));
    }
    check_teacher_constant(target_probs, "cross_entropy_soft");
    const auto K = static_cast<std::size_t>(logits->shape[0]);
    const auto C = static_cast<std::size_t>(logits->shape[1]);
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double* row = logits->data.data() + k * C;
        const double* p = target_probs->data.data() + k * C;
        const double mx = *std::max_element(row, row + C);
        double sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            sum += std::exp(row[j] - mx);
        }
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < C; ++j) {
            acc += p[j] * (lse - row[j]);
        }
    }
    acc /= static_cast<double>(K);
    return make_loss_node(acc, {logits, target_probs}, "cross_entropy_soft",
                          [logits, target_probs, K, C](TensorNode& o) {
                              logits->ensure_grad();
                              const double g = o.grad[0] / static_cast<double>(K);
                              for (std::size_t k = 0; k < K; ++k) {
                                  const double* row = logits->data.data() + k * C;
                                  const double* p = target_probs->data.data() + k * C;
                                  const double mx = *std::max_element(row, row + C);
                                  double sum = 0.0;
                                  double pmass = 0.0;
                                  for (std::size_t j = 0; j < C; ++j) {
                                      sum += std::exp(row[j] - mx);
                                      pmass += p[j];
                                  }
                                  const double inv = 1.0 / sum;
                                  for (std::size_t j = 0; j < C; ++j) {
                                      const double sm = std::exp(row[j] - mx) * inv;
                                      logits->grad[k * C + j] += g * (sm * pmass - p[j]);
                                  }
                              }
                          });
}

TensorPtr combine_pd(const TensorPtr& mlm, const TensorPtr& kd, const TensorPtr& nsp,
                     double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("pd_loss: alpha must lie strictly inside (0,1), got " +
                          std::to_string(alpha));
    }
    return add(add(scale(mlm, alpha), scale(kd, 1.0 - alpha)), nsp);
}

TensorPtr pd_loss(const TensorPtr& mlm_logits, const std::vector<std::int64_t>& mlm_labels,
                  const TensorPtr& teacher_mlm_probs, const TensorPtr& nsp_logits,
                  std::int64_t nsp_label, double alpha) {
    if (mlm_labels.empty()) {
        throw ContractError("pd_loss: no masked positions; batch construction must provide at "
                            "least one MLM target");
    }
    auto mlm = cross_entropy_labels(mlm_logits, mlm_labels);
    auto kd = cross_entropy_soft(mlm_logits, teacher_mlm_probs);
    auto nsp = cross_entropy_labels(nsp_logits, {nsp_label});
    return combine_pd(mlm, kd, nsp, alpha);
}

}  // namespace mbk
