#include "hardnet/hardnet_aff.hpp"

#include "hardnet/errors.hpp"

namespace hardnet::aff {

Vector project_single(const Vector& f, const Vector& a, double b) {
    if (f.size() != a.size()) {
        throw ShapeError("project_single: f has length " + std::to_string(f.size()) + ", a has length " +
                         std::to_string(a.size()));
    }
    const double norm2 = a.squaredNorm();
    if (norm2 == 0.0) throw std::invalid_argument("project_single: constraint normal is zero");
    const double violation = std::max(a.dot(f) - b, 0.0);
    return f - (violation / norm2) * a;
}

AffProjection project_aff(const Vector& f_theta, std::shared_ptr<const ReducedConstraints> reduced) {
    const ReducedConstraints& red = *reduced;
    if (f_theta.size() != red.reduced_size()) {
        throw ShapeError("project_aff: network output has length " + std::to_string(f_theta.size()) +
                         ", constraints expect " + std::to_string(red.reduced_size()));
    }
    AffProjection out;
    out.active.assign(static_cast<std::size_t>(red.n_ineq()), false);
    if (red.n_ineq() > 0) {
        Vector residual = red.A_tilde * f_theta - red.b_tilde;
        for (Eigen::Index i = 0; i < residual.size(); ++i) {
            out.active[static_cast<std::size_t>(i)] = residual(i) > 0.0;
        }
        out.f_star = f_theta - red.A_tilde_pinv * residual.cwiseMax(0.0);
    } else {
        out.f_star = f_theta;
    }
    out.y = red.lift(out.f_star);
    out.reduced = std::move(reduced);
    return out;
}

Vector AffProjection::backward(const Vector& grad_y) const {
    const ReducedConstraints& red = *reduced;
    if (grad_y.size() != red.n_out()) {
        throw ShapeError("project_aff_backward: gradient has length " + std::to_string(grad_y.size()) +
                         ", output has length " + std::to_string(red.n_out()));
    }
    // Through the lift: dy_dep/df* = -C1^{-1} C2, dy_free/df* = I.
    Vector g_dep(red.n_eq());
    Vector g_free(red.reduced_size());
    for (Eigen::Index k = 0; k < red.n_out(); ++k) {
        const double g = grad_y(red.permutation[static_cast<std::size_t>(k)]);
        if (k < red.n_eq()) {
            g_dep(k) = g;
        } else {
            g_free(k - red.n_eq()) = g;
        }
    }
    Vector g_star = g_free;
    if (red.n_eq() > 0) g_star -= red.C2.transpose() * (red.C1_inv.transpose() * g_dep);

    // Through f* = f - A~^+ diag(mask) (A~ f - b~): df*/df = I - A~^+ D A~.
    if (red.n_ineq() == 0) return g_star;
    Vector t = red.A_tilde_pinv.transpose() * g_star;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        if (!active[static_cast<std::size_t>(i)]) t(i) = 0.0;
    }
    return g_star - red.A_tilde.transpose() * t;
}

Matrix AffProjection::jacobian() const {
    const ReducedConstraints& red = *reduced;
    Matrix inner = Matrix::Identity(red.reduced_size(), red.reduced_size());
    if (red.n_ineq() > 0) {
        Matrix masked = red.A_tilde;
        for (Eigen::Index i = 0; i < masked.rows(); ++i) {
            if (!active[static_cast<std::size_t>(i)]) masked.row(i).setZero();
        }
        inner -= red.A_tilde_pinv * masked;
    }
    return red.lift_jacobian() * inner;
}

ad::NodeId project_aff(ad::Tape& tape, ad::NodeId f_theta, std::shared_ptr<const ReducedConstraints> reduced) {
    auto result = std::make_shared<AffProjection>(project_aff(tape.value(f_theta).as_vector(), std::move(reduced)));
    Tensor value(Matrix(result->y));
    return tape.custom("project_aff", {f_theta}, std::move(value), [result](const Matrix& upstream) {
        return std::vector<Matrix>{Matrix(result->backward(upstream.col(0)))};
    });
}

ad::NodeId lift(ad::Tape& tape, ad::NodeId free, const ReducedConstraints& reduced) {
    bool identity = reduced.n_eq() == 0;
    for (std::size_t k = 0; identity && k < reduced.permutation.size(); ++k) {
        identity = reduced.permutation[k] == static_cast<int>(k);
    }
    if (identity) return free;
    const ad::NodeId jac = tape.constant(Tensor(reduced.lift_jacobian()));
    const ad::NodeId offset = tape.constant(Tensor(Matrix(reduced.lift_offset())));
    return tape.add(tape.matmul(jac, free), offset);
}

}  // namespace hardnet::aff
