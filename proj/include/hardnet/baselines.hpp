#pragma once

#include <memory>

#include "hardnet/autodiff.hpp"
#include "hardnet/constraints.hpp"
#include "hardnet/hardnet_cvx.hpp"

namespace hardnet::baselines {

struct SoftPenaltyConfig {
    double lambda_ineq = 10.0;
    double lambda_eq = 10.0;
};

/// Unrolled gradient correction of inequality violation, DC3 style.
struct Dc3Config {
    int correction_steps = 10;
    double correction_lr = 1e-2;
    /// Use min(correction_lr, 1/L) with L = 2 |A~|_2^2, the Lipschitz
    /// constant of the penalty gradient, so a step never increases it.
    bool cap_lr = true;
    /// Backpropagate through the correction steps during training.
    bool train_unroll = true;
};

void validate(const SoftPenaltyConfig& cfg);
void validate(const Dc3Config& cfg);

/// Step size actually used by dc3_correct on these constraints.
double dc3_step_size(const ReducedConstraints& reduced, const Dc3Config& cfg);

/// lambda_ineq |ReLU(A y - b)|^2 + lambda_eq |C y - d|^2
double soft_penalty(const Vector& y, const ConstraintEval& ev, const SoftPenaltyConfig& cfg);
ad::NodeId soft_penalty(ad::Tape& tape, ad::NodeId y, const ConstraintEval& ev, const SoftPenaltyConfig& cfg);

/// Completes the free coordinates so that C y = d holds exactly.
Vector dc3_complete(const Vector& partial, const ReducedConstraints& reduced);
ad::NodeId dc3_complete(ad::Tape& tape, ad::NodeId partial, const ReducedConstraints& reduced);

/// Gradient steps on |ReLU(A y - b)|^2 taken in the free coordinates, then
/// re-lifted, so equalities stay satisfied.
Vector dc3_correct(const Vector& y, const ReducedConstraints& reduced, const Dc3Config& cfg);
Vector dc3_correct(const Vector& y, const ConstraintEval& ev, const Dc3Config& cfg);
/// Tape version: takes the free part, returns the corrected full output.
ad::NodeId dc3_correct(ad::Tape& tape, ad::NodeId partial, const ReducedConstraints& reduced, const Dc3Config& cfg);

enum class ProjectionRoute {
    affine,  // reduce to the free part and apply the closed-form layer
    convex,  // minimum-distance projection of the full output
};

/// Projection applied only at inference to an unconstrained model's output.
Vector test_time_project(const Vector& y, const ConstraintEval& ev, ProjectionRoute route,
                         const std::vector<int>& permutation = {});

}  // namespace hardnet::baselines
