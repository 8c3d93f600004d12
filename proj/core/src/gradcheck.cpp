#include "tasla/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tasla {

GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x0,
                           const std::vector<double>& analytic_grad, double h) {
    if (x0.size() != analytic_grad.size())
        throw std::invalid_argument("grad_check: gradient size mismatch");
    if (h <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

    GradCheckReport report;
    report.per_parameter_errors.resize(x0.size());
    std::vector<double> x = x0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x[i] = x0[i] + h;
        const double fp = f(x);
        x[i] = x0[i] - h;
        const double fm = f(x);
        x[i] = x0[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: non-finite f at parameter " +
                                     std::to_string(i));
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic_grad[i] - numeric) /
                           std::max(1.0, std::abs(numeric));
        report.per_parameter_errors[i] = err;
        report.max_relative_error = std::max(report.max_relative_error, err);
    }
    return report;
}

}  // namespace tasla
