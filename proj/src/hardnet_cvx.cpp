#include "hardnet/hardnet_cvx.hpp"

#include <cmath>
#include <limits>

#include "hardnet/errors.hpp"

namespace hardnet::cvx {

ConvexSet ConvexSet::polyhedron(Matrix A, Vector b, Matrix C, Vector d) {
    ConstraintEval ev{A, b, C, d};
    ev.validate();
    const Eigen::Index n = ev.n_out();
    if (A.rows() == 0) A = Matrix(0, n);
    if (C.rows() == 0) C = Matrix(0, n);
    return ConvexSet(Polyhedron{std::move(A), std::move(b), std::move(C), std::move(d)});
}

ConvexSet ConvexSet::polyhedron(const ConstraintEval& ev) {
    return polyhedron(ev.A, ev.b, ev.C, ev.d);
}

ConvexSet ConvexSet::ball(Vector center, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("ball: radius must be positive");
    return ConvexSet(Ball{std::move(center), radius});
}

ConvexSet ConvexSet::intersection(std::vector<ConvexSet> members) {
    if (members.empty()) throw std::invalid_argument("intersection: no member sets");
    const Eigen::Index n = members.front().dim();
    for (const ConvexSet& m : members) {
        if (m.dim() != n) throw ShapeError("intersection: member dimensions differ");
    }
    return ConvexSet(std::move(members));
}

SetKind ConvexSet::kind() const {
    switch (data_.index()) {
        case 0: return SetKind::polyhedron;
        case 1: return SetKind::ball;
        default: return SetKind::intersection;
    }
}

Eigen::Index ConvexSet::dim() const {
    switch (kind()) {
        case SetKind::polyhedron: return as_polyhedron().A.cols();
        case SetKind::ball: return as_ball().center.size();
        case SetKind::intersection: return members().front().dim();
    }
    return 0;
}

bool ConvexSet::contains(const Vector& z, double tol) const {
    switch (kind()) {
        case SetKind::polyhedron: {
            const Polyhedron& p = as_polyhedron();
            if (p.A.rows() > 0 && (p.A * z - p.b).maxCoeff() > tol) return false;
            if (p.C.rows() > 0 && (p.C * z - p.d).cwiseAbs().maxCoeff() > tol) return false;
            return true;
        }
        case SetKind::ball:
            return (z - as_ball().center).norm() <= as_ball().radius + tol;
        case SetKind::intersection:
            for (const ConvexSet& m : members()) {
                if (!m.contains(z, tol)) return false;
            }
            return true;
    }
    return false;
}

namespace {

// Goldfarb-Idnani dual active-set method specialised to min 1/2 |z - y|^2.
// Constraints are held in the ">=" form n^T z >= r; inequality a^T z <= b
// becomes (-a)^T z >= -b.
CvxProjection project_polyhedron(const Vector& y, const Polyhedron& poly, const SolverOptions& options) {
    const Eigen::Index n = y.size();
    const Eigen::Index ni = poly.A.rows();
    const Eigen::Index ne = poly.C.rows();
    if (poly.A.cols() != n || poly.C.cols() != n) {
        throw ShapeError("project_cvx: point has length " + std::to_string(n) + ", polyhedron has dimension " +
                         std::to_string(poly.A.cols()));
    }

    CvxProjection out;
    out.y = y;
    Vector z = y;
    Vector eq_mult = Vector::Zero(ne);
    if (ne > 0) {
        const Matrix gram = poly.C * poly.C.transpose();
        Eigen::LDLT<Matrix> ldlt(gram);
        if (ldlt.info() != Eigen::Success || singular_value_ratio(poly.C) <= 1e-12) {
            throw RankError("project_cvx: equality rows are linearly dependent");
        }
        eq_mult = ldlt.solve(poly.d - poly.C * y);
        z = y + poly.C.transpose() * eq_mult;
    }

    // Active inequality rows and their multipliers; equalities always active.
    std::vector<int> active;
    std::vector<double> mult;
    std::vector<bool> is_active(static_cast<std::size_t>(ni), false);

    auto normals = [&]() {
        Matrix N(n, ne + static_cast<Eigen::Index>(active.size()));
        if (ne > 0) N.leftCols(ne) = poly.C.transpose();
        for (std::size_t k = 0; k < active.size(); ++k) {
            N.col(ne + static_cast<Eigen::Index>(k)) = -poly.A.row(active[k]).transpose();
        }
        return N;
    };

    int iterations = 0;
    auto bump = [&]() {
        if (++iterations > options.max_iter) {
            const double residual = ni > 0 ? std::max(0.0, (poly.A * z - poly.b).maxCoeff()) : 0.0;
            throw ConvergenceError("project_cvx: active-set iteration cap reached", z, residual);
        }
    };

    for (;;) {
        // Most violated inactive inequality.
        int p = -1;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < ni; ++i) {
            if (is_active[static_cast<std::size_t>(i)]) continue;
            const double slack = poly.b(i) - poly.A.row(i).dot(z);
            const double scale = 1.0 + std::abs(poly.b(i)) + poly.A.row(i).norm() * z.norm();
            if (slack < -1e-12 * scale && slack < worst) {
                worst = slack;
                p = static_cast<int>(i);
            }
        }
        if (p < 0) break;

        const Vector np = -poly.A.row(p).transpose();
        const double rp = -poly.b(p);
        double u_new = 0.0;
        for (;;) {
            bump();
            const Matrix N = normals();
            Vector r(N.cols());
            Vector dir = np;
            if (N.cols() > 0) {
                Eigen::LDLT<Matrix> ldlt(N.transpose() * N);
                r = ldlt.solve(N.transpose() * np);
                dir = np - N * r;
            }
            // Partial step limit: first active inequality whose multiplier hits zero.
            double t1 = std::numeric_limits<double>::infinity();
            int drop = -1;
            for (std::size_t k = 0; k < active.size(); ++k) {
                const double rk = r(ne + static_cast<Eigen::Index>(k));
                if (rk > 1e-14) {
                    const double ratio = mult[k] / rk;
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = static_cast<int>(k);
                    }
                }
            }
            const double slack = np.dot(z) - rp;  // < 0 while violated
            const double dir2 = dir.squaredNorm();
            const bool null_step = dir2 <= 1e-20 * std::max(1.0, np.squaredNorm());
            if (null_step && drop < 0) {
                throw InfeasibleError("project_cvx: polyhedron is empty (constraint " + std::to_string(p) +
                                      " cannot be satisfied with the active set)");
            }
            const double t2 = null_step ? std::numeric_limits<double>::infinity() : -slack / dir2;
            const double t = std::min(t1, t2);
            if (!null_step) z += t * dir;
            for (std::size_t k = 0; k < active.size(); ++k) mult[k] -= t * r(ne + static_cast<Eigen::Index>(k));
            if (ne > 0) eq_mult -= t * r.head(ne);
            u_new += t;
            if (t2 <= t1) {
                active.push_back(p);
                mult.push_back(u_new);
                is_active[static_cast<std::size_t>(p)] = true;
                break;
            }
            is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = false;
            active.erase(active.begin() + drop);
            mult.erase(mult.begin() + drop);
        }
    }

    out.z = z;
    out.active_set = active;
    out.multipliers = Vector::Map(mult.data(), static_cast<Eigen::Index>(mult.size())).cwiseMax(0.0);
    out.eq_multipliers = eq_mult;
    out.iterations = iterations;
    for (Eigen::Index j = 0; j < ne; ++j) {
        out.tight.push_back({TightConstraint::Kind::equality, 0, static_cast<int>(j)});
    }
    for (int i : active) out.tight.push_back({TightConstraint::Kind::inequality, 0, i});
    out.normals.resize(static_cast<Eigen::Index>(out.tight.size()), n);
    if (ne > 0) out.normals.topRows(ne) = poly.C;
    for (std::size_t k = 0; k < active.size(); ++k) {
        out.normals.row(ne + static_cast<Eigen::Index>(k)) = poly.A.row(active[k]);
    }
    return out;
}

Vector project_ball_point(const Vector& y, const Ball& ball) {
    const Vector offset = y - ball.center;
    const double dist = offset.norm();
    if (dist <= ball.radius) return y;
    return ball.center + (ball.radius / dist) * offset;
}

CvxProjection project_ball(const Vector& y, const Ball& ball) {
    if (y.size() != ball.center.size()) {
        throw ShapeError("project_cvx: point has length " + std::to_string(y.size()) + ", ball has dimension " +
                         std::to_string(ball.center.size()));
    }
    CvxProjection out;
    out.y = y;
    out.z = project_ball_point(y, ball);
    out.normals.resize(0, y.size());
    if ((y - ball.center).norm() > ball.radius) {
        out.tight.push_back({TightConstraint::Kind::ball, 0, 0});
        out.lone_ball = ball;
    }
    return out;
}

Vector project_member(const Vector& y, const ConvexSet& set, const SolverOptions& options);

CvxProjection project_intersection(const Vector& y, const ConvexSet& set, const SolverOptions& options) {
    const auto& members = set.members();
    const std::size_t m = members.size();
    std::vector<Vector> increments(m, Vector::Zero(y.size()));
    Vector x = y;
    double change = std::numeric_limits<double>::infinity();
    int sweep = 0;
    while (change >= options.tol) {
        if (++sweep > options.max_iter) {
            throw ConvergenceError("project_cvx: Dykstra did not converge in " + std::to_string(options.max_iter) +
                                       " sweeps (set may be empty)",
                                   x, change);
        }
        const Vector previous = x;
        for (std::size_t i = 0; i < m; ++i) {
            const Vector shifted = x + increments[i];
            x = project_member(shifted, members[i], options);
            increments[i] = shifted - x;
        }
        change = (x - previous).norm();
    }
    if (!set.contains(x, 1e-6)) {
        throw InfeasibleError("project_cvx: Dykstra converged to a point outside the intersection (empty set)");
    }

    CvxProjection out;
    out.y = y;
    out.z = x;
    out.iterations = sweep;
    std::vector<Vector> rows;
    int curved = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const ConvexSet& member = members[i];
        const int idx = static_cast<int>(i);
        if (member.kind() == SetKind::polyhedron) {
            const Polyhedron& p = member.as_polyhedron();
            for (Eigen::Index j = 0; j < p.C.rows(); ++j) {
                out.tight.push_back({TightConstraint::Kind::equality, idx, static_cast<int>(j)});
                rows.emplace_back(p.C.row(j).transpose());
            }
            for (Eigen::Index j = 0; j < p.A.rows(); ++j) {
                const double scale = 1.0 + std::abs(p.b(j));
                if (std::abs(p.A.row(j).dot(x) - p.b(j)) <= options.tight_tol * scale) {
                    out.tight.push_back({TightConstraint::Kind::inequality, idx, static_cast<int>(j)});
                    rows.emplace_back(p.A.row(j).transpose());
                }
            }
        } else if (member.kind() == SetKind::ball) {
            const Ball& b = member.as_ball();
            const Vector offset = x - b.center;
            if (std::abs(offset.norm() - b.radius) <= options.tight_tol * (1.0 + b.radius)) {
                out.tight.push_back({TightConstraint::Kind::ball, idx, 0});
                rows.emplace_back(offset / offset.norm());
                out.lone_ball = b;
                ++curved;
            }
        } else {
            throw std::invalid_argument("project_cvx: nested intersections are not supported");
        }
    }
    if (!(curved == 1 && rows.size() == 1)) out.lone_ball.reset();
    out.approximate_jacobian = curved > 0 && rows.size() > 1;
    out.normals.resize(static_cast<Eigen::Index>(rows.size()), y.size());
    for (std::size_t k = 0; k < rows.size(); ++k) out.normals.row(static_cast<Eigen::Index>(k)) = rows[k];
    return out;
}

Vector project_member(const Vector& y, const ConvexSet& set, const SolverOptions& options) {
    switch (set.kind()) {
        case SetKind::polyhedron: return project_polyhedron(y, set.as_polyhedron(), options).z;
        case SetKind::ball: return project_ball_point(y, set.as_ball());
        case SetKind::intersection: return project_intersection(y, set, options).z;
    }
    return y;
}

}  // namespace

CvxProjection project_cvx(const Vector& y, const ConvexSet& set, const SolverOptions& options) {
    if (y.size() != set.dim()) {
        throw ShapeError("project_cvx: point has length " + std::to_string(y.size()) + ", set has dimension " +
                         std::to_string(set.dim()));
    }
    switch (set.kind()) {
        case SetKind::polyhedron: return project_polyhedron(y, set.as_polyhedron(), options);
        case SetKind::ball: return project_ball(y, set.as_ball());
        case SetKind::intersection: return project_intersection(y, set, options);
    }
    throw std::logic_error("project_cvx: unknown set kind");
}

Matrix CvxProjection::jacobian() const {
    const Eigen::Index n = y.size();
    const Matrix I = Matrix::Identity(n, n);
    if (lone_ball) {
        const Vector offset = y - lone_ball->center;
        const double dist = offset.norm();
        const Vector u = offset / dist;
        return (lone_ball->radius / dist) * (I - u * u.transpose());
    }
    if (normals.rows() == 0) return I;
    const Matrix gram = normals * normals.transpose();
    Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() == Eigen::Success && singular_value_ratio(normals) > 1e-10) {
        return I - normals.transpose() * ldlt.solve(normals);
    }
    // Dependent normals: project onto the orthogonal complement of their span.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(normals.transpose());
    const Matrix basis = cod.householderQ() * Matrix::Identity(n, cod.rank());
    return I - basis * basis.transpose();
}

Vector CvxProjection::backward(const Vector& grad_z) const {
    if (grad_z.size() != y.size()) {
        throw ShapeError("project_cvx_backward: gradient has length " + std::to_string(grad_z.size()) +
                         ", expected " + std::to_string(y.size()));
    }
    // The Jacobian is symmetric in every branch.
    return jacobian() * grad_z;
}

Vector project_cvx_backward(const CvxProjection& result, const Vector& grad_z) {
    return result.backward(grad_z);
}

ad::NodeId project_cvx(ad::Tape& tape, ad::NodeId y, const ConvexSet& set, const SolverOptions& options) {
    auto result = std::make_shared<CvxProjection>(project_cvx(tape.value(y).as_vector(), set, options));
    if (result->normals.rows() > 0 && !result->lone_ball) {
        result->degenerate = singular_value_ratio(result->normals) <= 1e-10;
    }
    Tensor value(Matrix(result->z));
    return tape.custom("project_cvx", {y}, std::move(value), [result](const Matrix& upstream) {
        return std::vector<Matrix>{Matrix(result->backward(upstream.col(0)))};
    });
}

OracleResult kkt_enumeration_oracle(const Vector& y, const ConstraintEval& ev) {
    ev.validate();
    const Eigen::Index n = y.size();
    const Eigen::Index ni = ev.n_ineq();
    const Eigen::Index ne = ev.n_eq();
    if (ni > 12) {
        throw std::invalid_argument("kkt_enumeration_oracle: " + std::to_string(ni) +
                                    " inequalities exceed the enumeration limit of 12");
    }
    if ((ni > 0 && ev.A.cols() != n) || (ne > 0 && ev.C.cols() != n)) {
        throw ShapeError("kkt_enumeration_oracle: point has length " + std::to_string(n) +
                         ", constraints have dimension " + std::to_string(ev.n_out()));
    }

    bool found = false;
    OracleResult best;
    double best_dist = std::numeric_limits<double>::infinity();
    const unsigned long subsets = 1ul << ni;
    for (unsigned long mask = 0; mask < subsets; ++mask) {
        std::vector<int> S;
        for (Eigen::Index i = 0; i < ni; ++i) {
            if (mask & (1ul << i)) S.push_back(static_cast<int>(i));
        }
        const Eigen::Index k = ne + static_cast<Eigen::Index>(S.size());
        if (k > n) continue;
        Matrix N(k, n);
        Vector rhs(k);
        if (ne > 0) {
            N.topRows(ne) = ev.C;
            rhs.head(ne) = ev.d;
        }
        for (std::size_t s = 0; s < S.size(); ++s) {
            N.row(ne + static_cast<Eigen::Index>(s)) = ev.A.row(S[s]);
            rhs(ne + static_cast<Eigen::Index>(s)) = ev.b(S[s]);
        }
        Vector z = y;
        Vector nu(k);
        if (k > 0) {
            if (singular_value_ratio(N) <= 1e-10) continue;
            nu = (N * N.transpose()).ldlt().solve(N * y - rhs);
            z = y - N.transpose() * nu;
        }
        // y - z = N^T nu; inequality multipliers must be nonnegative.
        bool ok = true;
        for (std::size_t s = 0; s < S.size() && ok; ++s) ok = nu(ne + static_cast<Eigen::Index>(s)) >= -1e-10;
        for (Eigen::Index i = 0; i < ni && ok; ++i) {
            ok = ev.A.row(i).dot(z) <= ev.b(i) + 1e-9 * (1.0 + std::abs(ev.b(i)));
        }
        if (ok && ne > 0) ok = (ev.C * z - ev.d).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + ev.d.cwiseAbs().maxCoeff());
        if (!ok) continue;
        const double dist = (z - y).norm();
        if (!found || dist < best_dist - 1e-12) {
            found = true;
            best_dist = dist;
            best.z = z;
            best.active_set = S;
            best.multipliers = nu.tail(static_cast<Eigen::Index>(S.size()));
        }
    }
    if (!found) throw InfeasibleError("kkt_enumeration_oracle: no KKT point exists (constraint set is empty)");
    return best;
}

}  // namespace hardnet::cvx
