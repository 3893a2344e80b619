#pragma once

#include <initializer_list>
#include <span>

#include <Eigen/Dense>

namespace hardnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense 2-D array of doubles. Vectors are n x 1. Every entry is finite;
/// constructing a Tensor from data containing NaN or Inf throws.
class Tensor {
public:
    Tensor() = default;
    Tensor(Eigen::Index rows, Eigen::Index cols);
    explicit Tensor(Matrix values);

    /// Builds a rows x cols tensor from row-major data.
    static Tensor from_rows(Eigen::Index rows, Eigen::Index cols, std::span<const double> data);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor scalar(double value);

    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }
    Eigen::Index size() const { return values_.size(); }
    bool is_vector() const { return values_.cols() == 1; }

    double operator()(Eigen::Index r, Eigen::Index c) const { return values_(r, c); }
    /// Linear index in row-major order.
    double operator[](Eigen::Index i) const;

    const Matrix& matrix() const { return values_; }
    /// Column view of a vector tensor; throws ShapeError otherwise.
    Vector as_vector() const;
    double item() const;

    bool same_shape(const Tensor& other) const {
        return rows() == other.rows() && cols() == other.cols();
    }

private:
    Matrix values_;
};

}  // namespace hardnet
