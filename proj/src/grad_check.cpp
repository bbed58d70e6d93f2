#include "mbk/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mbk {

GradCheckReport grad_check(const std::string& op_name, const std::function<TensorPtr()>& op,
                           const std::vector<TensorPtr>& inputs, double tolerance, double step) {
    for (const auto& in : inputs) {
        in->requires_grad = true;
        in->zero_grad();
    }
    auto out = op();
    if (!out || out->size() != 1) {
        throw ContractError("grad_check: closure must produce a scalar");
    }
    backward(out);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) {
        in->ensure_grad();
        analytic.push_back(in->grad);
    }

    GradCheckReport report;
    report.op = op_name;
    report.tolerance = tolerance;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& in = *inputs[i];
        for (std::size_t j = 0; j < in.data.size(); ++j) {
            const double orig = in.data[j];
            in.data[j] = orig + step;
            const double fp = op()->data[0];
            in.data[j] = orig - step;
            const double fm = op()->data[0];
            in.data[j] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[i][j];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            report.max_rel_err = std::max(report.max_rel_err, std::fabs(a - numeric) / denom);
        }
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

}  // namespace mbk
