#include "hardnet/experiments/nonconvex.hpp"

#include <chrono>
#include <random>

#include "hardnet/errors.hpp"

namespace hardnet::exp {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

std::vector<Vector> sample_box(int count, int dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Vector x(dim);
        for (int j = 0; j < dim; ++j) x(j) = dist(rng);
        out.push_back(std::move(x));
    }
    return out;
}

}  // namespace

ConstraintEval NonconvexProblem::constraints_at(const Vector& x) const {
    return ConstraintEval{A, b, C, x};
}

NonconvexProblem gen_nonconvex_task(int n, int n_eq, int n_ineq, std::uint64_t seed) {
    if (n < 1 || n_eq < 0 || n_ineq < 0 || n_eq + n_ineq > n) {
        throw std::invalid_argument("gen_nonconvex_task: need n_eq + n_ineq <= n");
    }
    std::mt19937_64 rng(seed);
    NonconvexProblem prob;
    prob.seed = seed;
    const Matrix G = gaussian(n, n, rng);
    prob.Q = G.transpose() * G + 1e-3 * Matrix::Identity(n, n);
    prob.p = gaussian(n, 1, rng);
    prob.A = gaussian(n_ineq, n, rng);
    bool full_rank = n_eq == 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        prob.C = gaussian(n_eq, n, rng);
        if (n_eq == 0 || singular_value_ratio(prob.C) > 1e-8) {
            full_rank = true;
            break;
        }
    }
    if (!full_rank) throw RankError("gen_nonconvex_task: C stayed rank-deficient after 10 resamples");
    if (n_eq == 0) prob.C = Matrix(0, n);
    const Matrix AC = n_eq > 0 ? Matrix(prob.A * pseudoinverse(prob.C)) : Matrix(n_ineq, 0);
    prob.b = AC.cwiseAbs().rowwise().sum() + Vector::Constant(n_ineq, 0.5);
    return prob;
}

double nonconvex_objective(const Vector& y, const NonconvexProblem& problem) {
    if (y.size() != problem.n()) {
        throw ShapeError("nonconvex_objective: y has length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(problem.n()));
    }
    return 0.5 * y.dot(problem.Q * y) + problem.p.dot(y.array().sin().matrix());
}

ad::NodeId nonconvex_objective(ad::Tape& tape, ad::NodeId y, const NonconvexProblem& problem) {
    const ad::NodeId Qy = tape.matmul(tape.constant(Tensor(problem.Q)), y);
    const ad::NodeId quad = tape.scale(tape.sum(tape.mul(y, Qy)), 0.5);
    const ad::NodeId lin = tape.matmul(tape.constant(Tensor(Matrix(problem.p.transpose()))), tape.sin(y));
    return tape.add(quad, lin);
}

NonconvexTask::NonconvexTask(NonconvexOptions options)
    : options_(options), problem_(gen_nonconvex_task(options.n, options.n_eq, options.n_ineq, options.problem_seed)) {
    spec_.n_out = problem_.n();
    spec_.n_ineq = problem_.n_ineq();
    spec_.n_eq = problem_.n_eq();
    spec_.evaluator = [prob = problem_](const Vector& x) { return prob.constraints_at(x); };
    std::mt19937_64 rng(options_.data_seed ^ 0xA5A5A5A5ULL);
    train_x_ = sample_box(options_.train_samples, problem_.n_eq(), rng);
    test_x_ = sample_box(options_.test_samples, problem_.n_eq(), rng);
}

std::shared_ptr<const ReducedConstraints> NonconvexTask::reduced_at(const Vector& x) const {
    // A and C do not depend on x, so only the offsets change between inputs.
    if (!base_reduced_) base_reduced_ = std::make_shared<const ReducedConstraints>(reduce(problem_.constraints_at(x), spec_.permutation));
    auto red = std::make_shared<ReducedConstraints>(*base_reduced_);
    const Eigen::Index ne = red->n_eq();
    const Matrix A1 = permute_columns(problem_.A, red->permutation).leftCols(ne);
    red->C1_inv_d = red->C1_inv * x;
    red->b_tilde = problem_.b - A1 * red->C1_inv_d;
    return red;
}

ad::NodeId NonconvexTask::sample_loss(const Model& model, const nn::MlpBinding& binding, ad::Tape& tape,
                                      std::size_t index, const TrainConfig& cfg, HeadMode mode) const {
    const Vector& x = train_x_.at(index);
    const ConstraintEval ev = problem_.constraints_at(x);
    const ad::NodeId input = tape.constant(Tensor(Matrix(x)));
    const ad::NodeId raw = nn::mlp_forward(model.net, binding, input, tape);
    const auto reduced = predicts_free_part(model.kind) ? reduced_at(x) : nullptr;
    const ad::NodeId y = apply_head(tape, model, raw, ev, reduced, cfg, mode);
    ad::NodeId loss = nonconvex_objective(tape, y, problem_);
    if (uses_soft_penalty(model.kind)) loss = tape.add(loss, baselines::soft_penalty(tape, y, ev, cfg.soft));
    return loss;
}

Evaluation NonconvexTask::evaluate(const Model& model, const TrainConfig& cfg) const {
    const bool needs_reduced = model.kind != ModelKind::nn && model.kind != ModelKind::soft &&
                               model.kind != ModelKind::hardnet_cvx;
    std::vector<Vector> outputs;
    outputs.reserve(test_x_.size());
    const auto start = std::chrono::steady_clock::now();
    for (const Vector& x : test_x_) {
        const ConstraintEval ev = problem_.constraints_at(x);
        outputs.push_back(apply_head(model, nn::mlp_eval(model.net, x), ev, needs_reduced ? reduced_at(x) : nullptr, cfg));
    }
    const auto stop = std::chrono::steady_clock::now();

    // Per-sample max / mean / count over the constraints, averaged over samples.
    Evaluation out;
    double objective = 0.0;
    for (std::size_t i = 0; i < test_x_.size(); ++i) {
        const ConstraintEval ev = problem_.constraints_at(test_x_[i]);
        const ViolationMetrics m = violation_metrics(outputs[i], ev, cfg.count_tol);
        out.row.violations += m;
        out.worst_ineq = std::max(out.worst_ineq, m.ineq_max);
        out.worst_eq = std::max(out.worst_eq, m.eq_max);
        objective += nonconvex_objective(outputs[i], problem_);
    }
    const double n = static_cast<double>(test_x_.size());
    out.row.violations /= n;
    out.row.metric = objective / n;
    if (cfg.record_timing) out.row.time_ms = std::chrono::duration<double, std::milli>(stop - start).count() / n;
    return out;
}

std::string NonconvexTask::check_constraints() const {
    std::vector<Vector> probes(test_x_.begin(), test_x_.begin() + std::min<std::size_t>(test_x_.size(), 20));
    const AssumptionReport report = check_assumption1(spec_, probes);
    return report.ok() ? std::string{} : report.message;
}

}  // namespace hardnet::exp
