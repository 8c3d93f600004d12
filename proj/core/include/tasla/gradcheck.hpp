#pragma once

#include <functional>
#include <vector>

namespace tasla {

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<double> per_parameter_errors;
};

// Central-difference check of an analytic gradient. For each parameter i the
// numeric derivative (f(x+h e_i) - f(x-h e_i)) / 2h is compared against
// analytic_grad[i]; the relative error divides by max(1, |numeric|) so the
// planted-fault case (analytic = 2x true) reports an error near 1.
// Throws if f evaluates to a non-finite value.
GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x0,
                           const std::vector<double>& analytic_grad, double h = 1e-5);

}  // namespace tasla
