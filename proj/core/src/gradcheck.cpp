#include "reldetr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reldetr/errors.hpp"

namespace reldetr::nk {
namespace {

double evaluate(const std::function<Tensor()>& loss, const std::string& where) {
    const double v = loss().item();
    if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite loss at " + where);
    return v;
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor()>& loss, ParameterSet& params,
                          const GradcheckOptions& options,
                          const std::function<void()>& before_numeric) {
    if (!(options.step > 0.0)) throw InputError("gradcheck: step must be positive");
    if (!(options.tolerance > 0.0)) throw InputError("gradcheck: tolerance must be positive");

    params.zero_grad();
    Tensor root = loss();
    if (!std::isfinite(root.item())) throw NumericError("gradcheck: non-finite loss at base point");
    root.backward();

    std::vector<std::vector<double>> analytic;
    for (const auto& p : params.items()) analytic.push_back(p.value.grad());
    if (before_numeric) before_numeric();

    GradcheckReport report;
    report.evaluations = 1;
    const double h = options.step;
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < params.items().size(); ++k) {
        auto& param = params.items()[k];
        auto data = param.value.mutable_values();
        ParameterError err{param.name};
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            const auto where = param.name + "[" + std::to_string(i) + "]";
            data[i] = saved + h;
            const double up = evaluate(loss, where);
            data[i] = saved - h;
            const double down = evaluate(loss, where);
            data[i] = saved;
            report.evaluations += 2;

            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double top = std::max(std::abs(up), std::abs(down));
            const double quantum = (std::nextafter(top, inf) - top) / (2.0 * h);
            const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor,
                                           options.roundoff_ulps * quantum / options.tolerance});
            const double rel = std::abs(a - numeric) / denom;
            err.max_roundoff_quanta = std::max(err.max_roundoff_quanta, std::abs(a - numeric) / quantum);
            if (i == 0 || rel > err.max_relative_error) {
                err.max_relative_error = rel;
                err.worst_index = i;
                err.analytic = a;
                err.numeric = numeric;
            }
        }
        report.max_relative_error = std::max(report.max_relative_error, err.max_relative_error);
        report.max_roundoff_quanta = std::max(report.max_roundoff_quanta, err.max_roundoff_quanta);
        report.parameters.push_back(std::move(err));
    }
    report.passed = report.max_relative_error < options.tolerance;
    params.zero_grad();
    return report;
}

}  // namespace reldetr::nk
