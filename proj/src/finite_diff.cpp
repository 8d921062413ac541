#include "educe/finite_diff.hpp"

#include <cmath>
#include <string>

namespace educe {

double finite_diff_check(const ScalarFn& f, std::vector<Tensor> params,
                         const std::vector<Tensor>& analytic, double epsilon) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
        throw DomainError("finite_diff_check: epsilon " + std::to_string(epsilon) +
                          " outside [1e-7, 1e-3]");
    if (analytic.size() != params.size())
        throw ShapeError("finite_diff_check: " + std::to_string(analytic.size()) +
                         " gradient tensors for " + std::to_string(params.size()) + " parameters");

    const double base = f(params);
    const double again = f(params);
    if (base != again)
        throw DeterminismError("finite_diff_check: two evaluations differ (" +
                               std::to_string(base) + " vs " + std::to_string(again) + ")");

    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        require_same_shape(params[p], analytic[p], "finite_diff_check");
        for (std::size_t i = 0; i < params[p].numel(); ++i) {
            const double saved = params[p].data[i];
            params[p].data[i] = saved + epsilon;
            const double up = f(params);
            params[p].data[i] = saved - epsilon;
            const double down = f(params);
            params[p].data[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic[p].data[i];
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            if (err > worst) worst = err;
        }
    }
    return worst;
}

}  // namespace educe
