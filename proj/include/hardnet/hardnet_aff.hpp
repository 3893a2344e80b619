#pragma once

#include <memory>
#include <vector>

#include "hardnet/autodiff.hpp"
#include "hardnet/constraints.hpp"

namespace hardnet::aff {

/// Closed-form projection onto one halfspace a^T y <= b:
///   f - a / |a|^2 * ReLU(a^T f - b).
Vector project_single(const Vector& f, const Vector& a, double b);

/// Output of the affine projection layer for one input.
struct AffProjection {
    Vector y;       // full feasible output, original coordinates
    Vector f_star;  // projected free coordinates
    std::vector<bool> active;  // A_tilde f - b_tilde > 0 for the unprojected f
    std::shared_ptr<const ReducedConstraints> reduced;

    /// Vector-Jacobian product: dL/dy -> dL/df for the unprojected free part f.
    Vector backward(const Vector& grad_y) const;
    /// Full Jacobian dy/df, n_out x (n_out - n_eq).
    Matrix jacobian() const;
};

/// f* = f - A~^+ ReLU(A~ f - b~), y = lift(f*). Constraints exactly at the
/// kink (residual == 0) are treated as inactive.
AffProjection project_aff(const Vector& f_theta, std::shared_ptr<const ReducedConstraints> reduced);

/// Same as the free function, recorded as a differentiable tape node whose
/// value is the full output y.
ad::NodeId project_aff(ad::Tape& tape, ad::NodeId f_theta, std::shared_ptr<const ReducedConstraints> reduced);

/// Lift without projection: equality completion of the free part.
ad::NodeId lift(ad::Tape& tape, ad::NodeId free, const ReducedConstraints& reduced);

}  // namespace hardnet::aff
