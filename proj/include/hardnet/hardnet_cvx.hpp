#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "hardnet/autodiff.hpp"
#include "hardnet/constraints.hpp"

namespace hardnet::cvx {

struct Polyhedron {
    Matrix A;
    Vector b;
    Matrix C;
    Vector d;
};

struct Ball {
    Vector center;
    double radius = 1.0;
};

enum class SetKind { polyhedron, ball, intersection };

/// Closed convex set: a polyhedron, a Euclidean ball, or an intersection of those.
class ConvexSet {
public:
    static ConvexSet polyhedron(Matrix A, Vector b, Matrix C, Vector d);
    static ConvexSet polyhedron(const ConstraintEval& ev);
    static ConvexSet ball(Vector center, double radius);
    static ConvexSet intersection(std::vector<ConvexSet> members);

    SetKind kind() const;
    Eigen::Index dim() const;
    const Polyhedron& as_polyhedron() const { return std::get<Polyhedron>(data_); }
    const Ball& as_ball() const { return std::get<Ball>(data_); }
    const std::vector<ConvexSet>& members() const { return std::get<std::vector<ConvexSet>>(data_); }

    bool contains(const Vector& z, double tol) const;

private:
    explicit ConvexSet(std::variant<Polyhedron, Ball, std::vector<ConvexSet>> data) : data_(std::move(data)) {}
    std::variant<Polyhedron, Ball, std::vector<ConvexSet>> data_;
};

struct SolverOptions {
    double tol = 1e-9;     // Dykstra: successive-iterate change
    int max_iter = 10000;  // active-set changes or Dykstra sweeps
    double tight_tol = 1e-6;  // slack below which an intersection member counts as tight
};

/// A constraint holding with equality at the projected point.
struct TightConstraint {
    enum class Kind { inequality, equality, ball };
    Kind kind = Kind::inequality;
    int member = 0;  // index within an intersection; 0 otherwise
    int row = 0;     // row of A or C within the member
};

struct CvxProjection {
    Vector y;
    Vector z;
    /// Inequality rows in the active set (polyhedron projections).
    std::vector<int> active_set;
    /// KKT multipliers of active_set, all >= 0.
    Vector multipliers;
    Vector eq_multipliers;
    std::vector<TightConstraint> tight;
    int iterations = 0;
    /// Active normals were linearly dependent; backward used a least-squares inverse.
    bool degenerate = false;
    /// Backward linearizes curved members alongside other tight constraints.
    bool approximate_jacobian = false;

    /// dL/dz -> dL/dy through the projection map at y.
    Vector backward(const Vector& grad_z) const;
    Matrix jacobian() const;

    // Linearization at z: rows are the tight normals.
    Matrix normals;
    // Set when the only tight constraint is a ball.
    std::optional<Ball> lone_ball;
};

/// Minimum-distance projection of y onto the set.
///  polyhedron: dual active-set QP (exact active set);
///  ball: closed form;
///  intersection: Dykstra's alternating projections.
/// Throws InfeasibleError for empty polyhedra, ConvergenceError when the
/// iteration cap is hit.
CvxProjection project_cvx(const Vector& y, const ConvexSet& set, const SolverOptions& options = {});

Vector project_cvx_backward(const CvxProjection& result, const Vector& grad_z);

ad::NodeId project_cvx(ad::Tape& tape, ad::NodeId y, const ConvexSet& set, const SolverOptions& options = {});

struct OracleResult {
    Vector z;
    std::vector<int> active_set;
    Vector multipliers;
};

/// Exhaustive KKT enumeration over all 2^n_ineq candidate active sets; the
/// smallest-index subset wins ties. Requires n_ineq <= 12.
OracleResult kkt_enumeration_oracle(const Vector& y, const ConstraintEval& ev);

}  // namespace hardnet::cvx
