#include "hardnet/experiments/unicycle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "hardnet/errors.hpp"
#include "hardnet/hardnet_aff.hpp"
#include "hardnet/hardnet_cvx.hpp"

namespace hardnet::exp {

void UnicycleParams::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("unicycle: dt must be > 0");
    if (n_step < 1) throw std::invalid_argument("unicycle: n_step must be >= 1");
    if (!(kappa > 0.0) || !(alpha > 0.0)) throw std::invalid_argument("unicycle: kappa and alpha must be > 0");
    if (!(l > 0.0)) throw std::invalid_argument("unicycle: axis offset l must be > 0");
    for (const Obstacle& o : obstacles) {
        if (!(o.rx > 0.0) || !(o.ry > 0.0)) throw std::invalid_argument("unicycle: obstacle radii must be > 0");
    }
}

namespace {

void check_state(const Vector& state) {
    if (state.size() != 5) throw ShapeError("unicycle: state has length " + std::to_string(state.size()) + ", expected 5");
}

void check_control(const Vector& u) {
    if (u.size() != 2) throw ShapeError("unicycle: control has length " + std::to_string(u.size()) + ", expected 2");
}

// Offset point p = (x + l cos th, y + l sin th) and its velocity.
struct OffsetPoint {
    double px, py, vx, vy;
};

OffsetPoint offset_point(const Vector& s, double l) {
    const double c = std::cos(s(2));
    const double sn = std::sin(s(2));
    return {s(0) + l * c, s(1) + l * sn, s(3) * c - l * s(4) * sn, s(3) * sn + l * s(4) * c};
}

}  // namespace

Vector unicycle_step(const Vector& state, const Vector& u, double dt) {
    check_state(state);
    check_control(u);
    if (!(dt > 0.0)) throw std::invalid_argument("unicycle_step: dt must be > 0");
    Vector next = state;
    next(0) += dt * state(3) * std::cos(state(2));
    next(1) += dt * state(3) * std::sin(state(2));
    next(2) += dt * state(4);
    next(3) += dt * u(0);
    next(4) += dt * u(1);
    return next;
}

ad::NodeId unicycle_step(ad::Tape& tape, ad::NodeId state, ad::NodeId u, double dt) {
    const Vector s = tape.value(state).as_vector();
    const Vector next = unicycle_step(s, tape.value(u).as_vector(), dt);
    const double c = std::cos(s(2));
    const double sn = std::sin(s(2));
    Matrix J = Matrix::Identity(5, 5);
    J(0, 2) = -dt * s(3) * sn;
    J(0, 3) = dt * c;
    J(1, 2) = dt * s(3) * c;
    J(1, 3) = dt * sn;
    J(2, 4) = dt;
    return tape.custom("unicycle_step", {state, u}, Tensor(Matrix(next)), [J, dt](const Matrix& g) {
        Matrix gu(2, 1);
        gu << dt * g(3, 0), dt * g(4, 0);
        return std::vector<Matrix>{J.transpose() * g, gu};
    });
}

double h_ellipse(const Vector& state, const Obstacle& obs, double l) {
    check_state(state);
    const OffsetPoint p = offset_point(state, l);
    const double dx = (obs.cx - p.px) / obs.rx;
    const double dy = (obs.cy - p.py) / obs.ry;
    return dx * dx + dy * dy - 1.0;
}

double h_ellipse_dot(const Vector& state, const Obstacle& obs, double l) {
    check_state(state);
    const OffsetPoint p = offset_point(state, l);
    const double ex = (p.px - obs.cx) / (obs.rx * obs.rx);
    const double ey = (p.py - obs.cy) / (obs.ry * obs.ry);
    return 2.0 * (ex * p.vx + ey * p.vy);
}

double hocbf_value(const Vector& state, const Obstacle& obs, double kappa, double l) {
    return h_ellipse_dot(state, obs, l) + kappa * h_ellipse(state, obs, l);
}

Vector hocbf_gradient(const Vector& state, const Obstacle& obs, double kappa, double l) {
    check_state(state);
    const OffsetPoint p = offset_point(state, l);
    const double c = std::cos(state(2));
    const double sn = std::sin(state(2));
    const double rx2 = obs.rx * obs.rx;
    const double ry2 = obs.ry * obs.ry;
    const double ex = (p.px - obs.cx) / rx2;
    const double ey = (p.py - obs.cy) / ry2;
    // d/dtheta of px, py, ex, ey, vx, vy
    const double dpx = -l * sn;
    const double dpy = l * c;
    const double dex = dpx / rx2;
    const double dey = dpy / ry2;
    const double dvx = -p.vy;
    const double dvy = p.vx;

    Vector g(5);
    g(0) = 2.0 * p.vx / rx2 + 2.0 * kappa * ex;
    g(1) = 2.0 * p.vy / ry2 + 2.0 * kappa * ey;
    g(2) = 2.0 * (dex * p.vx + ex * dvx + dey * p.vy + ey * dvy) + 2.0 * kappa * (ex * dpx + ey * dpy);
    g(3) = 2.0 * (ex * c + ey * sn);
    g(4) = 2.0 * (ex * dpx + ey * dpy);
    return g;
}

HocbfRow hocbf_constraint(const Vector& state, const Obstacle& obs, double kappa, double alpha, double l) {
    const Vector grad = hocbf_gradient(state, obs, kappa, l);
    const double drift = grad(0) * state(3) * std::cos(state(2)) + grad(1) * state(3) * std::sin(state(2)) +
                         grad(2) * state(4);
    HocbfRow row;
    row.h_e = h_ellipse(state, obs, l);
    row.h = h_ellipse_dot(state, obs, l) + kappa * row.h_e;
    row.a_row = Vector(2);
    row.a_row << -grad(3), -grad(4);
    row.b = drift + alpha * row.h;
    row.degenerate = row.a_row.norm() < 1e-10;
    return row;
}

ConstraintEval hocbf_constraints(const Vector& state, const UnicycleParams& params) {
    std::vector<HocbfRow> rows;
    for (const Obstacle& o : params.obstacles) {
        HocbfRow r = hocbf_constraint(state, o, params.kappa, params.alpha, params.l);
        if (!r.degenerate) rows.push_back(std::move(r));
    }
    Matrix A(static_cast<Eigen::Index>(rows.size()), 2);
    Vector b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        A.row(static_cast<Eigen::Index>(i)) = rows[i].a_row.transpose();
        b(static_cast<Eigen::Index>(i)) = rows[i].b;
    }
    return ConstraintEval::inequalities(std::move(A), std::move(b));
}

namespace {

Matrix nominal_jacobian(const Vector& s, const NominalGains& k) {
    const double c = std::cos(s(2));
    const double sn = std::sin(s(2));
    Matrix J = Matrix::Zero(2, 5);
    J(0, 0) = -k.k_f * c;
    J(0, 1) = -k.k_f * sn;
    J(0, 2) = k.k_f * (s(0) * sn - s(1) * c);
    J(0, 3) = -k.k_v;
    J(1, 0) = k.k_l * sn;
    J(1, 1) = -k.k_l * c;
    J(1, 2) = k.k_l * (s(0) * c + s(1) * sn);
    J(1, 4) = -k.k_w;
    return J;
}

}  // namespace

Vector nominal_control(const Vector& state, const NominalGains& gains) {
    check_state(state);
    const double c = std::cos(state(2));
    const double sn = std::sin(state(2));
    const double e_f = -(state(0) * c + state(1) * sn);
    const double e_l = state(0) * sn - state(1) * c;
    Vector u(2);
    u << gains.k_f * e_f - gains.k_v * state(3), gains.k_l * e_l - gains.k_w * state(4);
    return u;
}

ad::NodeId nominal_control(ad::Tape& tape, ad::NodeId state, const NominalGains& gains) {
    const Vector s = tape.value(state).as_vector();
    const Matrix J = nominal_jacobian(s, gains);
    return tape.custom("nominal_control", {state}, Tensor(Matrix(nominal_control(s, gains))),
                       [J](const Matrix& g) { return std::vector<Matrix>{J.transpose() * g}; });
}

Vector cbf_qp_controller(const Vector& state, const Vector& u_ref, const UnicycleParams& params) {
    check_control(u_ref);
    const ConstraintEval ev = hocbf_constraints(state, params);
    if (ev.n_ineq() == 0) return u_ref;
    return cvx::project_cvx(u_ref, cvx::ConvexSet::polyhedron(ev)).z;
}

namespace {

double stage_cost(const Vector& s, const Vector& u, const UnicycleParams& p) {
    double c = 0.0;
    for (int i = 0; i < 5; ++i) c += p.q_diag[static_cast<std::size_t>(i)] * s(i) * s(i);
    for (int i = 0; i < 2; ++i) c += p.r_diag[static_cast<std::size_t>(i)] * u(i) * u(i);
    return c;
}

int steps_of(const UnicycleParams& p, int n_step) {
    const int n = n_step < 0 ? p.n_step : n_step;
    if (n < 1) throw std::invalid_argument("rollout_cost: n_step must be >= 1");
    return n;
}

}  // namespace

double rollout_cost(const Policy& policy, const Vector& x0, const UnicycleParams& params, int n_step) {
    check_state(x0);
    const int n = steps_of(params, n_step);
    Vector s = x0;
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vector u = policy(s);
        cost += stage_cost(s, u, params);
        s = unicycle_step(s, u, params.dt);
    }
    return params.dt * cost;
}

ad::NodeId rollout_cost(ad::Tape& tape, const TapePolicy& policy, const Vector& x0, const UnicycleParams& params,
                        int n_step) {
    check_state(x0);
    const int n = steps_of(params, n_step);
    Vector q(5), r(2);
    for (int i = 0; i < 5; ++i) q(i) = params.q_diag[static_cast<std::size_t>(i)];
    for (int i = 0; i < 2; ++i) r(i) = params.r_diag[static_cast<std::size_t>(i)];
    const ad::NodeId qn = tape.constant(Tensor(Matrix(q)));
    const ad::NodeId rn = tape.constant(Tensor(Matrix(r)));

    ad::NodeId s = tape.constant(Tensor(Matrix(x0)));
    ad::NodeId total = tape.constant(Tensor::scalar(0.0));
    for (int i = 0; i < n; ++i) {
        const ad::NodeId u = policy(tape, s);
        total = tape.add(total, tape.sum(tape.mul(qn, tape.square(s))));
        total = tape.add(total, tape.sum(tape.mul(rn, tape.square(u))));
        s = unicycle_step(tape, s, u, params.dt);
    }
    return tape.scale(total, params.dt);
}

Trajectory simulate(const Policy& policy, const Vector& x0, const UnicycleParams& params) {
    check_state(x0);
    const std::size_t m = params.obstacles.size();
    Trajectory traj;
    traj.accumulated_violation.assign(m, 0.0);
    traj.min_h_e = std::numeric_limits<double>::infinity();
    Vector s = x0;
    for (int i = 0; i <= params.n_step; ++i) {
        TrajectoryStep step;
        step.state = s;
        for (std::size_t k = 0; k < m; ++k) step.h_e.push_back(h_ellipse(s, params.obstacles[k], params.l));
        for (double h : step.h_e) traj.min_h_e = std::min(traj.min_h_e, h);
        if (i < params.n_step) {
            step.u = policy(s);
            for (std::size_t k = 0; k < m; ++k) {
                const HocbfRow row = hocbf_constraint(s, params.obstacles[k], params.kappa, params.alpha, params.l);
                const double res = row.degenerate ? 0.0 : row.a_row.dot(step.u) - row.b;
                step.residual.push_back(res);
                traj.accumulated_violation[k] += std::max(0.0, res);
            }
            traj.cost += stage_cost(s, step.u, params);
            s = unicycle_step(s, step.u, params.dt);
        }
        traj.steps.push_back(std::move(step));
    }
    traj.cost *= params.dt;
    return traj;
}

UnicycleTask::UnicycleTask(UnicycleOptions options) : options_(std::move(options)) {
    const UnicycleParams& p = options_.params;
    p.validate();
    std::mt19937_64 rng(options_.data_seed ^ 0x3C3C3C3CULL);
    auto draw = [&](int count) {
        std::vector<Vector> out;
        int attempts = 0;
        while (static_cast<int>(out.size()) < count) {
            if (++attempts > 1000 * std::max(count, 1)) {
                throw std::runtime_error("unicycle: cannot sample initial states outside the obstacles");
            }
            Vector s(5);
            for (int i = 0; i < 5; ++i) {
                const auto k = static_cast<std::size_t>(i);
                std::uniform_real_distribution<double> dist(p.start_low[k], p.start_high[k]);
                s(i) = p.start_low[k] < p.start_high[k] ? dist(rng) : p.start_low[k];
            }
            bool safe = true;
            for (const Obstacle& o : p.obstacles) safe = safe && hocbf_value(s, o, p.kappa, p.l) >= 0.0 && h_ellipse(s, o, p.l) >= 0.0;
            if (safe) out.push_back(std::move(s));
        }
        return out;
    };
    train_x_ = draw(options_.train_states);
    test_x_ = draw(options_.test_states);
}

namespace {

// Inequality-only reduction without the rank requirement, for the DC3 correction.
std::shared_ptr<const ReducedConstraints> plain_reduction(const ConstraintEval& ev) {
    auto red = std::make_shared<ReducedConstraints>();
    red->A_tilde = ev.A;
    red->b_tilde = ev.b;
    red->C1_inv = Matrix(0, 0);
    red->C2 = Matrix(0, ev.A.cols());
    red->A_tilde_pinv = ev.A.completeOrthogonalDecomposition().pseudoInverse();
    red->C1_inv_d = Vector(0);
    for (int i = 0; i < ev.A.cols(); ++i) red->permutation.push_back(i);
    return red;
}

std::shared_ptr<const ReducedConstraints> try_reduce(const ConstraintEval& ev) {
    try {
        return std::make_shared<const ReducedConstraints>(reduce(ev));
    } catch (const RankError&) {
        return nullptr;
    }
}

}  // namespace

ad::NodeId UnicycleTask::sample_loss(const Model& model, const nn::MlpBinding& binding, ad::Tape& tape,
                                     std::size_t index, const TrainConfig& cfg, HeadMode mode) const {
    const UnicycleParams& p = options_.params;
    std::vector<ad::NodeId> penalties;
    // Constraint rows depend on the state; they enter the tape as constants.
    auto policy = [&](ad::Tape& t, ad::NodeId s) {
        const ad::NodeId raw = t.add(nn::mlp_forward(model.net, binding, s, t), nominal_control(t, s, p.gains));
        const ConstraintEval ev = hocbf_constraints(t.value(s).as_vector(), p);
        if (ev.n_ineq() == 0) return raw;
        ad::NodeId u = raw;
        switch (model.kind) {
            case ModelKind::nn:
            case ModelKind::nn_proj:
                break;
            case ModelKind::soft:
            case ModelKind::soft_proj:
                penalties.push_back(baselines::soft_penalty(t, raw, ev, cfg.soft));
                break;
            case ModelKind::dc3:
                u = baselines::dc3_correct(t, raw, *plain_reduction(ev), cfg.dc3);
                break;
            case ModelKind::hardnet_aff:
                if (mode.projection) {
                    if (auto red = try_reduce(ev)) {
                        u = aff::project_aff(t, raw, red);
                    } else {
                        u = cvx::project_cvx(t, raw, cvx::ConvexSet::polyhedron(ev));
                    }
                }
                break;
            case ModelKind::hardnet_cvx:
                if (mode.projection) u = cvx::project_cvx(t, raw, cvx::ConvexSet::polyhedron(ev));
                break;
        }
        return u;
    };
    ad::NodeId loss = rollout_cost(tape, policy, train_x_.at(index), p);
    if (!penalties.empty()) loss = tape.add(loss, tape.scale(tape.sum(tape.concat(penalties)), p.dt));
    return loss;
}

Vector UnicycleTask::control(const Model& model, const Vector& state, const TrainConfig& cfg, int* fallbacks) const {
    const UnicycleParams& p = options_.params;
    const Vector raw = nn::mlp_eval(model.net, state) + nominal_control(state, p.gains);
    const ConstraintEval ev = hocbf_constraints(state, p);
    if (ev.n_ineq() == 0) return raw;
    switch (model.kind) {
        case ModelKind::nn:
        case ModelKind::soft:
            return raw;
        case ModelKind::nn_proj:
        case ModelKind::soft_proj:
        case ModelKind::hardnet_aff:
            if (auto red = try_reduce(ev)) return aff::project_aff(raw, red).y;
            if (fallbacks) ++*fallbacks;
            return cvx::project_cvx(raw, cvx::ConvexSet::polyhedron(ev)).z;
        case ModelKind::hardnet_cvx:
            return cvx::project_cvx(raw, cvx::ConvexSet::polyhedron(ev)).z;
        case ModelKind::dc3:
            return baselines::dc3_correct(raw, *plain_reduction(ev), cfg.dc3);
    }
    throw std::logic_error("unicycle: unknown model kind");
}

std::vector<Trajectory> UnicycleTask::test_trajectories(const Model& model, const TrainConfig& cfg) const {
    std::vector<Trajectory> out;
    out.reserve(test_x_.size());
    for (const Vector& x0 : test_x_) {
        out.push_back(simulate([&](const Vector& s) { return control(model, s, cfg); }, x0, options_.params));
    }
    return out;
}

Evaluation UnicycleTask::evaluate(const Model& model, const TrainConfig& cfg) const {
    Evaluation out;
    int fallbacks = 0;
    std::vector<Trajectory> trajs;
    trajs.reserve(test_x_.size());
    const auto start = std::chrono::steady_clock::now();
    for (const Vector& x0 : test_x_) {
        trajs.push_back(
            simulate([&](const Vector& s) { return control(model, s, cfg, &fallbacks); }, x0, options_.params));
    }
    const auto stop = std::chrono::steady_clock::now();

    // Accumulated violation per obstacle along each trajectory; max / mean /
    // count over obstacles, averaged over trajectories.
    out.min_barrier = std::numeric_limits<double>::infinity();
    double cost = 0.0;
    for (const Trajectory& t : trajs) {
        ViolationMetrics m;
        double sum = 0.0;
        for (double v : t.accumulated_violation) {
            m.ineq_max = std::max(m.ineq_max, v);
            sum += v;
            if (v > cfg.count_tol) m.ineq_count += 1.0;
        }
        if (!t.accumulated_violation.empty()) m.ineq_mean = sum / static_cast<double>(t.accumulated_violation.size());
        out.row.violations += m;
        out.worst_ineq = std::max(out.worst_ineq, m.ineq_max);
        out.min_barrier = std::min(out.min_barrier, t.min_h_e);
        cost += t.cost;
    }
    const double n = static_cast<double>(std::max<std::size_t>(trajs.size(), 1));
    out.row.violations /= n;
    out.row.metric = cost / n;
    out.projection_fallbacks = fallbacks;
    if (cfg.record_timing) out.row.time_ms = std::chrono::duration<double, std::milli>(stop - start).count() / n;
    return out;
}

std::string UnicycleTask::check_constraints() const {
    // Rank loss of the 2x2 HOCBF block is handled per state by falling back to
    // the convex layer, so only feasibility at the start states is required.
    for (const Vector& s : test_x_) {
        const ConstraintEval ev = hocbf_constraints(s, options_.params);
        if (ev.n_ineq() == 0) continue;
        try {
            (void)cvx::project_cvx(Vector::Zero(2), cvx::ConvexSet::polyhedron(ev));
        } catch (const InfeasibleError& e) {
            return std::string("HOCBF rows infeasible at a start state: ") + e.what();
        }
    }
    return {};
}

}  // namespace hardnet::exp
