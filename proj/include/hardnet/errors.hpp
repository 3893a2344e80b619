#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hardnet {

/// Operand shapes incompatible with the requested operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A matrix expected to be invertible (or of full row rank) is not.
class RankError : public std::runtime_error {
public:
    RankError(const std::string& what, double condition = 0.0)
        : std::runtime_error(what), condition_(condition) {}

    /// Ratio of smallest to largest singular value where it was measured, else 0.
    double condition() const { return condition_; }

private:
    double condition_;
};

class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap. Carries the best iterate found.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd best, double residual)
        : std::runtime_error(what), best_(std::move(best)), residual_(residual) {}

    const Eigen::VectorXd& best_iterate() const { return best_; }
    double residual() const { return residual_; }

private:
    Eigen::VectorXd best_;
    double residual_;
};

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

}  // namespace hardnet
