#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mbk/tensor.hpp"

namespace mbk {

struct GradCheckReport {
    std::string op;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compares the reverse-mode gradient of a scalar-valued closure against
/// central finite differences over every element of `inputs`. The closure is
/// re-evaluated per probe, so it must rebuild its tape from the live input
/// tensors. Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const std::string& op_name, const std::function<TensorPtr()>& op,
                           const std::vector<TensorPtr>& inputs, double tolerance,
                           double step = 1e-5);

}  // namespace mbk
