#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "reldetr/parameter.hpp"
#include "reldetr/tensor.hpp"

namespace reldetr::nk {

struct GradcheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Relative error is |a - n| / max(|a|, |n|, denominator_floor), so
    /// gradients far below the floor are compared in absolute terms.
    double denominator_floor = 1e-6;
    /// Central differences cannot resolve gradients finer than
    /// ulp(f) / 2h. Differences below `roundoff_ulps` such quanta count as
    /// agreement: the denominator is raised to at least that resolution / tolerance.
    double roundoff_ulps = 4.0;
};

struct ParameterError {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    /// Worst |analytic - numeric| in units of ulp(f) / 2h.
    double max_roundoff_quanta = 0.0;
};

struct GradcheckReport {
    std::vector<ParameterError> parameters;
    double max_relative_error = 0.0;
    double max_roundoff_quanta = 0.0;
    std::size_t evaluations = 0;
    bool passed = false;
};

/// Compares the reverse-mode gradient of the scalar `loss` against central
/// differences (f(θ+h) - f(θ-h)) / 2h, one scalar at a time.
///
/// `loss` is called once for the analytic pass and twice per parameter
/// scalar afterwards. `before_numeric`, when set, runs once between the two
/// phases (e.g. to switch a DetachTape to replay). Throws NumericError naming
/// the parameter and index if the loss is ever non-finite.
GradcheckReport gradcheck(const std::function<Tensor()>& loss, ParameterSet& params,
                          const GradcheckOptions& options = {},
                          const std::function<void()>& before_numeric = {});

}  // namespace reldetr::nk
