#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hardnet/tensor.hpp"

namespace hardnet {

/// Affine constraint set A y <= b, C y = d evaluated at one input.
struct ConstraintEval {
    Matrix A;  // n_ineq x n_out
    Vector b;
    Matrix C;  // n_eq x n_out
    Vector d;

    static ConstraintEval inequalities(Matrix A, Vector b);

    Eigen::Index n_out() const { return A.rows() > 0 ? A.cols() : C.cols(); }
    Eigen::Index n_ineq() const { return A.rows(); }
    Eigen::Index n_eq() const { return C.rows(); }

    /// Throws ShapeError / std::domain_error on inconsistent or non-finite data.
    void validate() const;
};

/// Input-dependent constraint set x -> (A(x), b(x), C(x), d(x)).
struct AffineConstraintSpec {
    std::function<ConstraintEval(const Vector& x)> evaluator;
    int n_out = 0;
    int n_ineq = 0;
    int n_eq = 0;
    /// permutation[k] = original output index placed at position k; empty = identity.
    std::vector<int> permutation;
    /// True when the evaluator ignores x, so one reduction serves every input.
    bool constant = false;

    ConstraintEval evaluate(const Vector& x) const;
};

/// Inequality-only form after eliminating the equalities, in permuted output
/// coordinates y_perm = [y1; y2] with y1 = C1^{-1}(d - C2 y2).
struct ReducedConstraints {
    Matrix A_tilde;       // n_ineq x (n_out - n_eq)
    Vector b_tilde;
    Matrix C1_inv;        // n_eq x n_eq
    Matrix C2;            // n_eq x (n_out - n_eq)
    Matrix A_tilde_pinv;  // (n_out - n_eq) x n_ineq
    Vector C1_inv_d;
    std::vector<int> permutation;

    Eigen::Index n_out() const { return C1_inv.rows() + A_tilde_pinv.rows(); }
    Eigen::Index n_eq() const { return C1_inv.rows(); }
    Eigen::Index n_ineq() const { return A_tilde.rows(); }
    Eigen::Index reduced_size() const { return A_tilde_pinv.rows(); }

    /// Full output in original coordinates from the free coordinates y2.
    Vector lift(const Vector& free) const;
    /// The free coordinates y2 of a full output.
    Vector free_part(const Vector& y) const;
    /// d lift / d free, in original coordinates: n_out x (n_out - n_eq).
    Matrix lift_jacobian() const;
    /// lift(0).
    Vector lift_offset() const;
};

/// Right inverse M^T (M M^T)^{-1} of a full-row-rank matrix via Cholesky.
/// Retries once with 1e-12 diagonal jitter; throws RankError if that fails
/// or M M^+ deviates from the identity by more than 1e-8.
Matrix pseudoinverse(const Matrix& M);

/// Applies a permutation (position k takes column permutation[k]).
Matrix permute_columns(const Matrix& M, const std::vector<int>& permutation);

ReducedConstraints reduce(const ConstraintEval& ev, const std::vector<int>& permutation = {});

/// Smallest / largest singular value; 0 for an empty matrix.
double singular_value_ratio(const Matrix& M);

/// Greedy column pivoting: picks n_eq columns of C maximizing the smallest
/// singular value of the selected block, then appends the rest in order.
std::vector<int> suggest_permutation(const Matrix& C);

enum class AssumptionStatus {
    ok,
    too_many_constraints,
    singular_equality_block,
    rank_deficient,
    infeasible,
};

const char* to_string(AssumptionStatus status);

struct AssumptionReport {
    AssumptionStatus status = AssumptionStatus::ok;
    std::string message;
    std::optional<Vector> offending_x;
    /// Set when the stored column order fails but another one passes.
    std::optional<std::vector<int>> suggested_permutation;
    double min_equality_ratio = 1.0;
    double min_reduced_ratio = 1.0;
    std::vector<Vector> witnesses;  // one feasible point per probe

    bool ok() const { return status == AssumptionStatus::ok; }
};

/// Checks invertibility of the leading equality block, full row rank of the
/// reduced inequality matrix, and feasibility at every probe point.
/// Singular-value ratios must exceed rel_tol.
AssumptionReport check_assumption1(const AffineConstraintSpec& spec, const std::vector<Vector>& probes,
                                   double rel_tol = 1e-8);

struct ViolationMetrics {
    double ineq_max = 0.0;
    double ineq_mean = 0.0;
    double ineq_count = 0.0;
    double eq_max = 0.0;
    double eq_mean = 0.0;
    double eq_count = 0.0;

    ViolationMetrics& operator+=(const ViolationMetrics& o);
    ViolationMetrics& operator/=(double n);
};

/// max / mean / count of ReLU(A y - b) and |C y - d|. An entry counts as a
/// violation when it exceeds count_tol.
ViolationMetrics violation_metrics(const Vector& y, const ConstraintEval& ev, double count_tol = 1e-6);

}  // namespace hardnet
