#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace educe {

// Error taxonomy. The CLI maps ConfigError/DataError to exit code 1 and
// everything else to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct MaskError : Error {
    using Error::Error;
};
struct ProvenanceError : Error {
    using Error::Error;
};
struct DeterminismError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct CapacityError : Error {
    using Error::Error;
};
struct StratifyError : Error {
    using Error::Error;
};
struct BudgetError : Error {
    using Error::Error;
};
struct DegenerateProtocolError : Error {
    using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit floats. Scalars have shape {1}.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

    std::size_t numel() const { return data.size(); }
    bool empty() const { return data.empty(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return numel() == 1; }

    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace educe
