#pragma once

#include <functional>
#include <vector>

#include "educe/tensor.hpp"

namespace educe {

// f evaluates a scalar from the given parameter tensors; it must be
// deterministic (checked by evaluating twice at the base point).
using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

// Max over all coordinates of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const ScalarFn& f, std::vector<Tensor> params,
                         const std::vector<Tensor>& analytic, double epsilon);

}  // namespace educe
