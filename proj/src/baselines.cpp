#include "hardnet/baselines.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>

#include "hardnet/errors.hpp"
#include "hardnet/hardnet_aff.hpp"

namespace hardnet::baselines {

void validate(const SoftPenaltyConfig& cfg) {
    if (!(cfg.lambda_ineq >= 0.0) || !(cfg.lambda_eq >= 0.0)) {
        throw std::invalid_argument("soft penalty weights must be nonnegative");
    }
}

void validate(const Dc3Config& cfg) {
    if (cfg.correction_steps < 0) throw std::invalid_argument("dc3: correction_steps must be >= 0");
    if (!(cfg.correction_lr > 0.0)) throw std::invalid_argument("dc3: correction_lr must be positive");
}

double dc3_step_size(const ReducedConstraints& reduced, const Dc3Config& cfg) {
    validate(cfg);
    if (!cfg.cap_lr || reduced.n_ineq() == 0) return cfg.correction_lr;
    const Matrix gram = reduced.A_tilde * reduced.A_tilde.transpose();
    const double L = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    return L > 0.0 ? std::min(cfg.correction_lr, 1.0 / L) : cfg.correction_lr;
}

double soft_penalty(const Vector& y, const ConstraintEval& ev, const SoftPenaltyConfig& cfg) {
    validate(cfg);
    double total = 0.0;
    if (ev.n_ineq() > 0) total += cfg.lambda_ineq * (ev.A * y - ev.b).cwiseMax(0.0).squaredNorm();
    if (ev.n_eq() > 0) total += cfg.lambda_eq * (ev.C * y - ev.d).squaredNorm();
    return total;
}

ad::NodeId soft_penalty(ad::Tape& tape, ad::NodeId y, const ConstraintEval& ev, const SoftPenaltyConfig& cfg) {
    validate(cfg);
    ad::NodeId total = tape.constant(Tensor::scalar(0.0));
    if (ev.n_ineq() > 0) {
        const ad::NodeId Ay = tape.matmul(tape.constant(Tensor(ev.A)), y);
        const ad::NodeId viol = tape.relu(tape.sub(Ay, tape.constant(Tensor(Matrix(ev.b)))));
        total = tape.add(total, tape.scale(tape.sum(tape.square(viol)), cfg.lambda_ineq));
    }
    if (ev.n_eq() > 0) {
        const ad::NodeId Cy = tape.matmul(tape.constant(Tensor(ev.C)), y);
        const ad::NodeId res = tape.sub(Cy, tape.constant(Tensor(Matrix(ev.d))));
        total = tape.add(total, tape.scale(tape.sum(tape.square(res)), cfg.lambda_eq));
    }
    return total;
}

Vector dc3_complete(const Vector& partial, const ReducedConstraints& reduced) {
    return reduced.lift(partial);
}

ad::NodeId dc3_complete(ad::Tape& tape, ad::NodeId partial, const ReducedConstraints& reduced) {
    return aff::lift(tape, partial, reduced);
}

namespace {

Vector correct_free(Vector z, const ReducedConstraints& red, const Dc3Config& cfg) {
    if (red.n_ineq() == 0 || cfg.correction_steps == 0) return z;
    const double lr = dc3_step_size(red, cfg);
    for (int step = 0; step < cfg.correction_steps; ++step) {
        const Vector viol = (red.A_tilde * z - red.b_tilde).cwiseMax(0.0);
        z -= lr * 2.0 * (red.A_tilde.transpose() * viol);
    }
    return z;
}

}  // namespace

Vector dc3_correct(const Vector& y, const ReducedConstraints& reduced, const Dc3Config& cfg) {
    validate(cfg);
    return reduced.lift(correct_free(reduced.free_part(y), reduced, cfg));
}

Vector dc3_correct(const Vector& y, const ConstraintEval& ev, const Dc3Config& cfg) {
    return dc3_correct(y, reduce(ev), cfg);
}

ad::NodeId dc3_correct(ad::Tape& tape, ad::NodeId partial, const ReducedConstraints& reduced, const Dc3Config& cfg) {
    validate(cfg);
    ad::NodeId z = partial;
    if (reduced.n_ineq() > 0 && cfg.correction_steps > 0) {
        if (cfg.train_unroll) {
            const ad::NodeId At = tape.constant(Tensor(reduced.A_tilde));
            const ad::NodeId AtT = tape.constant(Tensor(Matrix(reduced.A_tilde.transpose())));
            const ad::NodeId bt = tape.constant(Tensor(Matrix(reduced.b_tilde)));
            const double lr = dc3_step_size(reduced, cfg);
            for (int step = 0; step < cfg.correction_steps; ++step) {
                const ad::NodeId viol = tape.relu(tape.sub(tape.matmul(At, z), bt));
                const ad::NodeId grad = tape.matmul(AtT, viol);
                z = tape.sub(z, tape.scale(grad, 2.0 * lr));
            }
        } else {
            // Correction applied as a constant shift; gradients bypass it.
            const Vector z0 = tape.value(partial).as_vector();
            const Vector shift = correct_free(z0, reduced, cfg) - z0;
            z = tape.add(partial, tape.constant(Tensor(Matrix(shift))));
        }
    }
    return aff::lift(tape, z, reduced);
}

Vector test_time_project(const Vector& y, const ConstraintEval& ev, ProjectionRoute route,
                         const std::vector<int>& permutation) {
    if (y.size() != ev.n_out()) {
        throw ShapeError("test_time_project: output has length " + std::to_string(y.size()) + ", constraints expect " +
                         std::to_string(ev.n_out()));
    }
    if (route == ProjectionRoute::convex) {
        return cvx::project_cvx(y, cvx::ConvexSet::polyhedron(ev)).z;
    }
    auto reduced = std::make_shared<const ReducedConstraints>(reduce(ev, permutation));
    return aff::project_aff(reduced->free_part(y), reduced).y;
}

}  // namespace hardnet::baselines
