#pragma once

#include "mbk/model.hpp"
#include "mbk/tensor.hpp"

namespace mbk {

/// Scalar weights combining the per-layer transfer terms and the distillation
/// mixing coefficient.
struct TransferWeights {
    double fmt_weight = 1.0;
    double at_weight = 1.0;
    double alpha = 0.5;             // strictly inside (0,1)
    double fmt_stats_weight = 1.0;  // weight of the map-statistics term

    void validate() const;
};

/// Plain mean squared error between two feature maps, (1/(T*N)) sum (a-b)^2.
/// Gradients flow to the student (second) argument only.
TensorPtr raw_fmt_loss(const TensorPtr& teacher_map, const TensorPtr& student_map);

/// Feature map transfer decomposed into the MSE of per-token standardized
/// maps (mean/variance over the feature axis, eps 1e-6) plus stats_weight
/// times the mean squared difference of per-token means and variances.
TensorPtr fmt_loss(const TensorPtr& teacher_map, const TensorPtr& student_map,
                   double stats_weight);

/// (1/(rows*A)) sum of KL(teacher_row || student_row) over heads and rows,
/// with a 1e-12 floor inside the logarithms. Both inputs must be
/// row-stochastic within 1e-6.
TensorPtr at_loss(const TensorPtr& teacher_attn, const TensorPtr& student_attn);

/// fmt_weight * fmt + at_weight * at at one layer of a trace pair.
TensorPtr layer_kt_loss(const LayerTrace& teacher, const LayerTrace& student, std::int64_t layer,
                        const TransferWeights& weights);

/// Mean cross-entropy of logits[K,C] against integer labels.
TensorPtr cross_entropy_labels(const TensorPtr& logits, const std::vector<std::int64_t>& labels);
/// Mean cross-entropy of logits[K,C] against a constant soft target
/// distribution of the same shape.
TensorPtr cross_entropy_soft(const TensorPtr& logits, const TensorPtr& target_probs);

/// alpha * mlm + (1 - alpha) * kd + nsp.
TensorPtr combine_pd(const TensorPtr& mlm, const TensorPtr& kd, const TensorPtr& nsp,
                     double alpha);

/// Pre-training distillation loss: masked-position cross-entropy against hard
/// labels and against the teacher's soft distribution, plus the
/// next-sentence term.
TensorPtr pd_loss(const TensorPtr& mlm_logits, const std::vector<std::int64_t>& mlm_labels,
                  const TensorPtr& teacher_mlm_probs, const TensorPtr& nsp_logits,
                  std::int64_t nsp_label, double alpha);

}  // namespace mbk
