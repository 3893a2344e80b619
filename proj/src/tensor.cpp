#include "hardnet/tensor.hpp"

#include <sstream>

#include "hardnet/errors.hpp"

namespace hardnet {

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

Tensor::Tensor(Eigen::Index rows, Eigen::Index cols) : values_(Matrix::Zero(rows, cols)) {}

Tensor::Tensor(Matrix values) : values_(std::move(values)) {
    if (!values_.allFinite()) {
        throw std::domain_error("tensor of shape " + shape_string(values_.rows(), values_.cols()) +
                                " contains non-finite entries");
    }
}

Tensor Tensor::from_rows(Eigen::Index rows, Eigen::Index cols, std::span<const double> data) {
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(rows, cols));
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
        }
    }
    return Tensor(std::move(m));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    Vector v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v(i++) = x;
    return Tensor(Matrix(v));
}

Tensor Tensor::scalar(double value) {
    return Tensor(Matrix::Constant(1, 1, value));
}

double Tensor::operator[](Eigen::Index i) const {
    return values_(i / values_.cols(), i % values_.cols());
}

Vector Tensor::as_vector() const {
    if (!is_vector()) {
        throw ShapeError("expected a column vector, got " + shape_string(rows(), cols()));
    }
    return values_.col(0);
}

double Tensor::item() const {
    if (size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_string(rows(), cols()));
    }
    return values_(0, 0);
}

}  // namespace hardnet
