#include "lacovl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lacovl {

GradCheckReport check_against_fd(std::vector<double>& values, const std::vector<double>& analytic,
                                 const std::function<double()>& eval,
                                 const GradCheckOptions& opts) {
    GradCheckReport report;
    const double f0 = eval();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + opts.h;
        const double fp = eval();
        values[i] = saved - opts.h;
        const double fm = eval();
        values[i] = saved;

        const double right = (fp - f0) / opts.h;
        const double left = (f0 - fm) / opts.h;
        const double side_scale = std::max({1.0, std::fabs(left), std::fabs(right)});
        if (std::fabs(right - left) > opts.kink_tol * side_scale) {
            report.skipped_kinks.push_back(i);
            continue;
        }

        const double numeric = (fp - fm) / (2.0 * opts.h);
        const double a = analytic.empty() ? 0.0 : analytic[i];
        const double rel = std::fabs(a - numeric) /
                           std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        ++report.checked;
        report.max_rel_err = std::max(report.max_rel_err, rel);
        if (rel > opts.tol) {
            report.pass = false;
            report.failures.push_back({i, a, numeric, rel});
        }
    }
    return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& opts) {
    Tensor probe = x.detach().set_requires_grad(true);
    Tensor loss = f(probe);
    if (loss.size() != 1) throw NotScalar("grad_check: f must be scalar-valued");
    loss.backward();
    std::vector<double> analytic =
        probe.has_grad() ? probe.grad() : std::vector<double>(probe.size(), 0.0);

    Tensor eval_point = x.detach();
    auto eval = [&]() {
        NoGradGuard ng;
        return f(eval_point).value();
    };
    return check_against_fd(eval_point.values(), analytic, eval, opts);
}

}  // namespace lacovl
