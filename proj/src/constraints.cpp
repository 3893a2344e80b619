#include "hardnet/constraints.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "hardnet/errors.hpp"
#include "hardnet/hardnet_cvx.hpp"

namespace hardnet {

namespace {

std::vector<int> identity_permutation(Eigen::Index n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    return p;
}

std::string describe(const Vector& x) {
    std::ostringstream os;
    os << "[";
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
    os << "]";
    return os.str();
}

}  // namespace

ConstraintEval ConstraintEval::inequalities(Matrix A, Vector b) {
    const Eigen::Index n = A.cols();
    return ConstraintEval{std::move(A), std::move(b), Matrix(0, n), Vector(0)};
}

void ConstraintEval::validate() const {
    if (A.rows() != b.size()) {
        throw ShapeError("constraint: A is " + shape_string(A.rows(), A.cols()) + " but b has length " +
                         std::to_string(b.size()));
    }
    if (C.rows() != d.size()) {
        throw ShapeError("constraint: C is " + shape_string(C.rows(), C.cols()) + " but d has length " +
                         std::to_string(d.size()));
    }
    if (A.rows() > 0 && C.rows() > 0 && A.cols() != C.cols()) {
        throw ShapeError("constraint: A has " + std::to_string(A.cols()) + " columns, C has " +
                         std::to_string(C.cols()));
    }
    if (!A.allFinite() || !b.allFinite() || !C.allFinite() || !d.allFinite()) {
        throw std::domain_error("constraint: non-finite coefficients");
    }
}

ConstraintEval AffineConstraintSpec::evaluate(const Vector& x) const {
    ConstraintEval ev = evaluator(x);
    ev.validate();
    if (ev.n_ineq() != n_ineq || ev.n_eq() != n_eq || (n_ineq + n_eq > 0 && ev.n_out() != n_out)) {
        throw ShapeError("constraint spec declares (n_out, n_ineq, n_eq) = (" + std::to_string(n_out) + ", " +
                         std::to_string(n_ineq) + ", " + std::to_string(n_eq) + "), evaluator returned (" +
                         std::to_string(ev.n_out()) + ", " + std::to_string(ev.n_ineq()) + ", " +
                         std::to_string(ev.n_eq()) + ")");
    }
    if (ev.A.rows() == 0) ev.A = Matrix(0, n_out);
    if (ev.C.rows() == 0) ev.C = Matrix(0, n_out);
    return ev;
}

Vector ReducedConstraints::lift(const Vector& free) const {
    if (free.size() != reduced_size()) {
        throw ShapeError("lift: free part has length " + std::to_string(free.size()) + ", expected " +
                         std::to_string(reduced_size()));
    }
    const Eigen::Index ne = n_eq();
    Vector permuted(n_out());
    permuted.head(ne) = C1_inv_d - C1_inv * (C2 * free);
    permuted.tail(free.size()) = free;
    Vector y(n_out());
    for (Eigen::Index k = 0; k < n_out(); ++k) y(permutation[static_cast<std::size_t>(k)]) = permuted(k);
    return y;
}

Vector ReducedConstraints::free_part(const Vector& y) const {
    if (y.size() != n_out()) {
        throw ShapeError("free_part: output has length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(n_out()));
    }
    Vector free(reduced_size());
    for (Eigen::Index k = 0; k < reduced_size(); ++k) {
        free(k) = y(permutation[static_cast<std::size_t>(n_eq() + k)]);
    }
    return free;
}

Matrix ReducedConstraints::lift_jacobian() const {
    Matrix permuted(n_out(), reduced_size());
    permuted.topRows(n_eq()) = -C1_inv * C2;
    permuted.bottomRows(reduced_size()).setIdentity();
    Matrix J(n_out(), reduced_size());
    for (Eigen::Index k = 0; k < n_out(); ++k) J.row(permutation[static_cast<std::size_t>(k)]) = permuted.row(k);
    return J;
}

Vector ReducedConstraints::lift_offset() const {
    return lift(Vector::Zero(reduced_size()));
}

Matrix pseudoinverse(const Matrix& M) {
    if (M.rows() > M.cols()) {
        throw ShapeError("pseudoinverse: expected rows <= cols, got " + shape_string(M.rows(), M.cols()));
    }
    if (M.rows() == 0) return Matrix(M.cols(), 0);
    const Matrix gram = M * M.transpose();
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
        llt.compute(gram + 1e-12 * Matrix::Identity(gram.rows(), gram.cols()));
        if (llt.info() != Eigen::Success) {
            throw RankError("pseudoinverse: M M^T is not positive definite (rank-deficient " +
                            shape_string(M.rows(), M.cols()) + " matrix)");
        }
    }
    Matrix pinv = llt.solve(M).transpose();
    const double residual = (M * pinv - Matrix::Identity(M.rows(), M.rows())).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-8)) {
        throw RankError("pseudoinverse: M M^+ deviates from identity by " + std::to_string(residual) +
                            " (matrix is numerically rank-deficient)",
                        singular_value_ratio(M));
    }
    return pinv;
}

Matrix permute_columns(const Matrix& M, const std::vector<int>& permutation) {
    if (permutation.empty()) return M;
    Matrix out(M.rows(), M.cols());
    for (Eigen::Index k = 0; k < M.cols(); ++k) out.col(k) = M.col(permutation[static_cast<std::size_t>(k)]);
    return out;
}

double singular_value_ratio(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    const double smax = s(0);
    if (smax == 0.0) return 0.0;
    // Fewer singular values than rows means rank < rows.
    if (s.size() < M.rows()) return 0.0;
    return s(s.size() - 1) / smax;
}

ReducedConstraints reduce(const ConstraintEval& ev, const std::vector<int>& permutation) {
    ev.validate();
    const Eigen::Index n = ev.n_out();
    const Eigen::Index ne = ev.n_eq();
    const Eigen::Index ni = ev.n_ineq();
    if (ne > n) {
        throw ShapeError("reduce: " + std::to_string(ne) + " equalities for " + std::to_string(n) + " outputs");
    }
    std::vector<int> perm = permutation.empty() ? identity_permutation(n) : permutation;
    if (static_cast<Eigen::Index>(perm.size()) != n) {
        throw ShapeError("reduce: permutation of length " + std::to_string(perm.size()) + " for " +
                         std::to_string(n) + " outputs");
    }

    ReducedConstraints red;
    red.permutation = perm;
    const Matrix Cp = ne > 0 ? permute_columns(ev.C, perm) : Matrix(0, n);
    const Matrix Ap = ni > 0 ? permute_columns(ev.A, perm) : Matrix(0, n);
    red.C2 = Cp.rightCols(n - ne);
    if (ne > 0) {
        const Matrix C1 = Cp.leftCols(ne);
        const double ratio = singular_value_ratio(C1);
        if (!(ratio > 1e-8)) {
            throw RankError("reduce: leading equality block is singular (inverse condition number " +
                                std::to_string(ratio) + ")",
                            ratio);
        }
        red.C1_inv = C1.partialPivLu().inverse();
        red.C1_inv_d = red.C1_inv * ev.d;
    } else {
        red.C1_inv = Matrix(0, 0);
        red.C1_inv_d = Vector(0);
    }
    const Matrix A1 = Ap.leftCols(ne);
    red.A_tilde = Ap.rightCols(n - ne) - A1 * (red.C1_inv * red.C2);
    red.b_tilde = ev.b - A1 * red.C1_inv_d;
    red.A_tilde_pinv = pseudoinverse(red.A_tilde);
    return red;
}

std::vector<int> suggest_permutation(const Matrix& C) {
    const Eigen::Index n = C.cols();
    std::vector<int> chosen;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (Eigen::Index k = 0; k < C.rows(); ++k) {
        int best = -1;
        double best_sigma = -1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (used[static_cast<std::size_t>(j)]) continue;
            Matrix block(C.rows(), static_cast<Eigen::Index>(chosen.size()) + 1);
            for (std::size_t c = 0; c < chosen.size(); ++c) block.col(static_cast<Eigen::Index>(c)) = C.col(chosen[c]);
            block.col(block.cols() - 1) = C.col(j);
            Eigen::JacobiSVD<Matrix> svd(block);
            const double sigma = svd.singularValues()(svd.singularValues().size() - 1);
            if (sigma > best_sigma) {
                best_sigma = sigma;
                best = static_cast<int>(j);
            }
        }
        chosen.push_back(best);
        used[static_cast<std::size_t>(best)] = true;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!used[static_cast<std::size_t>(j)]) chosen.push_back(static_cast<int>(j));
    }
    return chosen;
}

const char* to_string(AssumptionStatus status) {
    switch (status) {
        case AssumptionStatus::ok: return "ok";
        case AssumptionStatus::too_many_constraints: return "too_many_constraints";
        case AssumptionStatus::singular_equality_block: return "singular_equality_block";
        case AssumptionStatus::rank_deficient: return "rank_deficient";
        case AssumptionStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

AssumptionReport check_assumption1(const AffineConstraintSpec& spec, const std::vector<Vector>& probes,
                                   double rel_tol) {
    AssumptionReport report;
    if (spec.n_ineq + spec.n_eq > spec.n_out) {
        report.status = AssumptionStatus::too_many_constraints;
        report.message = std::to_string(spec.n_ineq) + " inequalities + " + std::to_string(spec.n_eq) +
                         " equalities exceed " + std::to_string(spec.n_out) +
                         " outputs; the reduced inequality matrix cannot have full row rank";
        return report;
    }
    const std::vector<int> perm =
        spec.permutation.empty() ? identity_permutation(spec.n_out) : spec.permutation;

    // Equality block first: a failure here may be fixable by reordering outputs.
    for (const Vector& x : probes) {
        const ConstraintEval ev = spec.evaluate(x);
        if (ev.n_eq() == 0) break;
        const double ratio = singular_value_ratio(permute_columns(ev.C, perm).leftCols(ev.n_eq()));
        report.min_equality_ratio = std::min(report.min_equality_ratio, ratio);
        if (ratio > rel_tol) continue;

        report.status = AssumptionStatus::singular_equality_block;
        report.offending_x = x;
        report.message = "equality block C(:, :n_eq) is singular at x = " + describe(x);
        const std::vector<int> candidate = suggest_permutation(ev.C);
        bool candidate_ok = true;
        for (const Vector& px : probes) {
            const ConstraintEval pev = spec.evaluate(px);
            if (!(singular_value_ratio(permute_columns(pev.C, candidate).leftCols(pev.n_eq())) > rel_tol)) {
                candidate_ok = false;
                break;
            }
        }
        if (candidate_ok) report.suggested_permutation = candidate;
        return report;
    }

    for (const Vector& x : probes) {
        const ConstraintEval ev = spec.evaluate(x);
        ReducedConstraints red;
        try {
            red = reduce(ev, perm);
        } catch (const RankError&) {
            report.status = AssumptionStatus::rank_deficient;
            report.offending_x = x;
            report.message = "reduced inequality matrix is rank-deficient at x = " + describe(x);
            return report;
        }
        if (ev.n_ineq() > 0) {
            const double ratio = singular_value_ratio(red.A_tilde);
            report.min_reduced_ratio = std::min(report.min_reduced_ratio, ratio);
            if (!(ratio > rel_tol)) {
                report.status = AssumptionStatus::rank_deficient;
                report.offending_x = x;
                report.message = "reduced inequality matrix is rank-deficient at x = " + describe(x);
                return report;
            }
        }
        try {
            const Vector origin = Vector::Zero(ev.n_out());
            Vector witness = ev.n_ineq() <= 12 ? cvx::kkt_enumeration_oracle(origin, ev).z
                                               : cvx::project_cvx(origin, cvx::ConvexSet::polyhedron(ev)).z;
            report.witnesses.push_back(std::move(witness));
        } catch (const InfeasibleError& e) {
            report.status = AssumptionStatus::infeasible;
            report.offending_x = x;
            report.message = "constraint set is empty at x = " + describe(x) + ": " + e.what();
            return report;
        }
    }
    report.message = "ok";
    return report;
}

ViolationMetrics& ViolationMetrics::operator+=(const ViolationMetrics& o) {
    ineq_max += o.ineq_max;
    ineq_mean += o.ineq_mean;
    ineq_count += o.ineq_count;
    eq_max += o.eq_max;
    eq_mean += o.eq_mean;
    eq_count += o.eq_count;
    return *this;
}

ViolationMetrics& ViolationMetrics::operator/=(double n) {
    ineq_max /= n;
    ineq_mean /= n;
    ineq_count /= n;
    eq_max /= n;
    eq_mean /= n;
    eq_count /= n;
    return *this;
}

ViolationMetrics violation_metrics(const Vector& y, const ConstraintEval& ev, double count_tol) {
    if (y.size() != ev.n_out()) {
        throw ShapeError("violation_metrics: output length " + std::to_string(y.size()) + ", constraints expect " +
                         std::to_string(ev.n_out()));
    }
    ViolationMetrics m;
    if (ev.n_ineq() > 0) {
        const Vector v = (ev.A * y - ev.b).cwiseMax(0.0);
        m.ineq_max = v.maxCoeff();
        m.ineq_mean = v.mean();
        m.ineq_count = static_cast<double>((v.array() > count_tol).count());
    }
    if (ev.n_eq() > 0) {
        const Vector v = (ev.C * y - ev.d).cwiseAbs();
        m.eq_max = v.maxCoeff();
        m.eq_mean = v.mean();
        m.eq_count = static_cast<double>((v.array() > count_tol).count());
    }
    return m;
}

}  // namespace hardnet
