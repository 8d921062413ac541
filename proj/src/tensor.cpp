#include "educe/tensor.hpp"

#include <cmath>
#include <numeric>

namespace educe {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

static std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

Tensor Tensor::zeros(Shape s) {
    Tensor t;
    t.data.assign(shape_numel(s), 0.0);
    t.shape = std::move(s);
    return t;
}

Tensor Tensor::full(Shape s, double v) {
    Tensor t;
    t.data.assign(shape_numel(s), v);
    t.shape = std::move(s);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
}

Tensor Tensor::vec(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    if (v.size() != rows * cols)
        throw ShapeError("matrix: data length " + std::to_string(v.size()) + " does not fill " +
                         shape_str({rows, cols}));
    Tensor t;
    t.shape = {rows, cols};
    t.data = std::move(v);
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows: tensor is not rank-2, shape " + shape_str(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols: tensor is not rank-2, shape " + shape_str(shape));
    return shape[1];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

}  // namespace educe
