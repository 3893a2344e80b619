#include "hardnet/experiments/fitting.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace hardnet::exp {

double fitting_target(double x) {
    using std::numbers::pi;
    if (x <= -1.0) return -5.0 * std::sin(pi / 2.0 * (x + 1.0));
    if (x <= 0.0) return 0.0;
    if (x <= 1.0) return 4.0 - 9.0 * (x - 2.0 / 3.0) * (x - 2.0 / 3.0);
    return 5.0 * (1.0 - x) + 3.0;
}

ScalarConstraint fitting_constraint(double x) {
    using std::numbers::pi;
    if (x <= -1.0) {
        const double s = std::sin(pi / 2.0 * (x + 1.0));
        return {-1.0, -5.0 * s * s};
    }
    if (x <= 0.0) return {1.0, 0.0};
    if (x <= 1.0) {
        const double q = x - 2.0 / 3.0;
        return {-1.0, (9.0 * q * q - 4.0) * x};
    }
    return {1.0, 4.5 * (1.0 - x) + 3.0};
}

AffineConstraintSpec fitting_constraint_spec() {
    AffineConstraintSpec spec;
    spec.n_out = 1;
    spec.n_ineq = 1;
    spec.n_eq = 0;
    spec.evaluator = [](const Vector& x) {
        const ScalarConstraint c = fitting_constraint(x(0));
        return ConstraintEval::inequalities(Matrix::Constant(1, 1, c.a), Vector::Constant(1, c.b));
    };
    return spec;
}

FittingTask::FittingTask(FittingOptions options) : options_(options), spec_(fitting_constraint_spec()) {
    std::mt19937_64 rng(options_.data_seed);
    std::uniform_real_distribution<double> dist(options_.train_low, options_.train_high);
    for (int i = 0; i < options_.train_samples; ++i) train_x_.push_back(dist(rng));
    for (int i = 0; i < options_.grid_points; ++i) {
        const double t = options_.grid_points > 1 ? static_cast<double>(i) / (options_.grid_points - 1) : 0.0;
        grid_.push_back(options_.grid_low + t * (options_.grid_high - options_.grid_low));
    }
}

namespace {

std::shared_ptr<const ReducedConstraints> reduced_at(const ConstraintEval& ev) {
    return std::make_shared<const ReducedConstraints>(reduce(ev));
}

}  // namespace

ad::NodeId FittingTask::sample_loss(const Model& model, const nn::MlpBinding& binding, ad::Tape& tape,
                                    std::size_t index, const TrainConfig& cfg, HeadMode mode) const {
    const double x = train_x_.at(index);
    const Vector xv = Vector::Constant(1, x);
    const ConstraintEval ev = spec_.evaluate(xv);
    const ad::NodeId input = tape.constant(Tensor(Matrix(xv)));
    const ad::NodeId raw = nn::mlp_forward(model.net, binding, input, tape);
    const ad::NodeId y = apply_head(tape, model, raw, ev, reduced_at(ev), cfg, mode);
    const ad::NodeId err = tape.sub(y, tape.constant(Tensor::scalar(fitting_target(x))));
    ad::NodeId loss = tape.sum(tape.square(err));
    if (uses_soft_penalty(model.kind)) loss = tape.add(loss, baselines::soft_penalty(tape, y, ev, cfg.soft));
    return loss;
}

std::vector<FittingPrediction> FittingTask::predictions(const Model& model, const TrainConfig& cfg) const {
    std::vector<FittingPrediction> out;
    out.reserve(grid_.size());
    for (double x : grid_) {
        const Vector xv = Vector::Constant(1, x);
        const ConstraintEval ev = spec_.evaluate(xv);
        const Vector y = apply_head(model, nn::mlp_eval(model.net, xv), ev, reduced_at(ev), cfg);
        const ScalarConstraint c = fitting_constraint(x);
        out.push_back({x, fitting_target(x), y(0), c.a, c.b});
    }
    return out;
}

Evaluation FittingTask::evaluate(const Model& model, const TrainConfig& cfg) const {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<FittingPrediction> preds = predictions(model, cfg);
    const auto stop = std::chrono::steady_clock::now();

    // Violations are aggregated over the whole grid: max, mean, and count of
    // ReLU(a(x) y(x) - b(x)) across the test points.
    Evaluation ev;
    double sq = 0.0;
    double viol_sum = 0.0;
    for (const FittingPrediction& p : preds) {
        sq += (p.prediction - p.target) * (p.prediction - p.target);
        const double v = std::max(0.0, p.a * p.prediction - p.b);
        viol_sum += v;
        ev.row.violations.ineq_max = std::max(ev.row.violations.ineq_max, v);
        if (v > cfg.count_tol) ev.row.violations.ineq_count += 1.0;
    }
    const double n = static_cast<double>(preds.size());
    ev.row.metric = std::sqrt(sq / n);
    ev.row.violations.ineq_mean = viol_sum / n;
    ev.worst_ineq = ev.row.violations.ineq_max;
    if (cfg.record_timing) {
        ev.row.time_ms = std::chrono::duration<double, std::milli>(stop - start).count() / n;
    }
    return ev;
}

std::string FittingTask::check_constraints() const {
    std::vector<Vector> probes;
    for (double x : grid_) probes.push_back(Vector::Constant(1, x));
    const AssumptionReport report = check_assumption1(spec_, probes);
    return report.ok() ? std::string{} : report.message;
}

}  // namespace hardnet::exp
