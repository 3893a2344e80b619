#include "hardnet/experiments/run_output.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hardnet::exp {

Scale parse_scale(const std::string& name) {
    if (name == "small") return Scale::small;
    if (name == "paper") return Scale::paper;
    throw std::invalid_argument("unknown scale '" + name + "' (expected small or paper)");
}

std::string to_string(Scale scale) {
    return scale == Scale::paper ? "paper" : "small";
}

namespace {

struct TaskDefaults {
    int epochs;
    int batch_size;
    double lr;
    int hidden_width;
    int hidden_layers;
    int log_every;
};

TaskDefaults defaults_for(const std::string& task) {
    if (task == "fitting") return {1000, 50, 1e-3, 200, 2, 10};
    if (task == "nonconvex") return {100, 64, 1e-3, 200, 2, 10};
    if (task == "unicycle") return {30, 20, 1e-3, 64, 2, 5};
    throw std::invalid_argument("unknown task '" + task + "' (expected fitting, nonconvex or unicycle)");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <std::size_t N>
std::string fmt(const std::array<double, N>& a) {
    std::string s = "[";
    for (std::size_t i = 0; i < N; ++i) s += (i ? ", " : "") + fmt(a[i]);
    return s + "]";
}

}  // namespace

ResolvedRun resolve(const RunOptions& options) {
    const TaskDefaults d = defaults_for(options.task);
    ResolvedRun run;
    run.options = options;
    TrainConfig& t = run.train;
    t.epochs = options.epochs >= 0 ? options.epochs : d.epochs;
    t.batch_size = options.batch_size > 0 ? options.batch_size : d.batch_size;
    t.lr = options.lr > 0.0 ? options.lr : d.lr;
    t.hidden_width = options.hidden_width > 0 ? options.hidden_width : d.hidden_width;
    t.hidden_layers = options.hidden_layers >= 0 ? options.hidden_layers : d.hidden_layers;
    t.log_every = options.log_every > 0 ? options.log_every : d.log_every;
    t.warm_start_epochs = options.warm_start;
    t.seed = options.seed;
    t.record_timing = options.record_timing;
    baselines::validate(t.soft);
    baselines::validate(t.dc3);

    run.fitting.data_seed = options.data_seed;
    run.nonconvex.problem_seed = options.data_seed;
    run.nonconvex.data_seed = options.data_seed;
    run.unicycle.data_seed = options.data_seed;
    if (options.scale == Scale::paper) {
        run.nonconvex.n = 100;
        run.nonconvex.n_eq = 50;
        run.nonconvex.n_ineq = 50;
        run.nonconvex.train_samples = 10000;
        run.unicycle.train_states = 1000;
    }
    if (options.train_samples > 0) {
        run.fitting.train_samples = options.train_samples;
        run.nonconvex.train_samples = options.train_samples;
        run.unicycle.train_states = options.train_samples;
    }
    if (options.test_samples > 0) {
        run.nonconvex.test_samples = options.test_samples;
        run.unicycle.test_states = options.test_samples;
    }
    return run;
}

std::unique_ptr<Task> make_task(const ResolvedRun& run) {
    const std::string& task = run.options.task;
    if (task == "fitting") return std::make_unique<FittingTask>(run.fitting);
    if (task == "nonconvex") return std::make_unique<NonconvexTask>(run.nonconvex);
    if (task == "unicycle") return std::make_unique<UnicycleTask>(run.unicycle);
    throw std::invalid_argument("unknown task '" + task + "'");
}

std::vector<std::pair<std::string, std::string>> config_entries(const ResolvedRun& run) {
    const TrainConfig& t = run.train;
    std::vector<std::pair<std::string, std::string>> e{
        {"task", run.options.task},
        {"model", to_string(run.options.model)},
        {"scale", to_string(run.options.scale)},
        {"seed", std::to_string(t.seed)},
        {"data_seed", std::to_string(run.options.data_seed)},
        {"epochs", std::to_string(t.epochs)},
        {"warm_start_epochs", std::to_string(t.warm_start_epochs)},
        {"batch_size", std::to_string(t.batch_size)},
        {"optimizer", "adam"},
        {"lr", fmt(t.lr)},
        {"adam_beta1", "0.9"},
        {"adam_beta2", "0.999"},
        {"adam_eps", "1e-08"},
        {"hidden_width", std::to_string(t.hidden_width)},
        {"hidden_layers", std::to_string(t.hidden_layers)},
        {"activation", "relu"},
        {"init", "he_normal"},
        {"log_every", std::to_string(t.log_every)},
        {"soft_lambda_ineq", fmt(t.soft.lambda_ineq)},
        {"soft_lambda_eq", fmt(t.soft.lambda_eq)},
        {"dc3_correction_steps", std::to_string(t.dc3.correction_steps)},
        {"dc3_correction_lr", fmt(t.dc3.correction_lr)},
        {"dc3_cap_lr_at_inverse_lipschitz", t.dc3.cap_lr ? "true" : "false"},
        {"dc3_train_unroll", t.dc3.train_unroll ? "true" : "false"},
        {"count_tol", fmt(t.count_tol)},
        {"record_timing", t.record_timing ? "true" : "false"},
    };
    const std::string& task = run.options.task;
    if (task == "fitting") {
        const FittingOptions& f = run.fitting;
        e.emplace_back("train_samples", std::to_string(f.train_samples));
        e.emplace_back("train_range", "[" + fmt(f.train_low) + ", " + fmt(f.train_high) + "]");
        e.emplace_back("grid_points", std::to_string(f.grid_points));
        e.emplace_back("grid_range", "[" + fmt(f.grid_low) + ", " + fmt(f.grid_high) + "]");
        e.emplace_back("loss", "squared_error");
    } else if (task == "nonconvex") {
        const NonconvexOptions& n = run.nonconvex;
        e.emplace_back("n", std::to_string(n.n));
        e.emplace_back("n_eq", std::to_string(n.n_eq));
        e.emplace_back("n_ineq", std::to_string(n.n_ineq));
        e.emplace_back("train_samples", std::to_string(n.train_samples));
        e.emplace_back("test_samples", std::to_string(n.test_samples));
        e.emplace_back("problem_seed", std::to_string(n.problem_seed));
        e.emplace_back("q_regularization", "0.001");
        e.emplace_back("b_margin", "0.5");
        e.emplace_back("x_domain", "[-1, 1]^n_eq");
    } else {
        const UnicycleOptions& u = run.unicycle;
        const UnicycleParams& p = u.params;
        e.emplace_back("train_states", std::to_string(u.train_states));
        e.emplace_back("test_states", std::to_string(u.test_states));
        e.emplace_back("dt", fmt(p.dt));
        e.emplace_back("n_step", std::to_string(p.n_step));
        e.emplace_back("integrator", "explicit_euler");
        e.emplace_back("kappa", fmt(p.kappa));
        e.emplace_back("alpha", fmt(p.alpha));
        e.emplace_back("axis_offset_l", fmt(p.l));
        e.emplace_back("q_diag", fmt(p.q_diag));
        e.emplace_back("r_diag", fmt(p.r_diag));
        e.emplace_back("nominal_gains", "k_f=" + fmt(p.gains.k_f) + " k_v=" + fmt(p.gains.k_v) +
                                            " k_l=" + fmt(p.gains.k_l) + " k_w=" + fmt(p.gains.k_w));
        e.emplace_back("policy", "nominal + mlp");
        e.emplace_back("start_low", fmt(p.start_low));
        e.emplace_back("start_high", fmt(p.start_high));
        for (std::size_t i = 0; i < p.obstacles.size(); ++i) {
            const Obstacle& o = p.obstacles[i];
            e.emplace_back("obstacle_" + std::to_string(i),
                           "cx=" + fmt(o.cx) + " cy=" + fmt(o.cy) + " rx=" + fmt(o.rx) + " ry=" + fmt(o.ry));
        }
    }
    return e;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << MetricsRow::csv_header() << '\n';
    for (const MetricsRow& r : rows) os << r.csv() << '\n';
}

void write_config(std::ostream& os, const ResolvedRun& run) {
    for (const auto& [k, v] : config_entries(run)) os << k << " = " << v << '\n';
}

void write_predictions_csv(std::ostream& os, const std::vector<FittingPrediction>& preds) {
    os << "x,target,prediction,a,b\n";
    char buf[256];
    for (const FittingPrediction& p : preds) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g\n", p.x, p.target, p.prediction, p.a, p.b);
        os << buf;
    }
}

void write_trajectory_csv(std::ostream& os, const std::vector<Trajectory>& trajectories) {
    const std::size_t m = trajectories.empty() || trajectories.front().steps.empty()
                              ? 0
                              : trajectories.front().steps.front().h_e.size();
    os << "trajectory,step,x_p,y_p,theta,v,w,a_lin,a_ang";
    for (std::size_t k = 0; k < m; ++k) os << ",h_ellipse_" << k;
    for (std::size_t k = 0; k < m; ++k) os << ",hocbf_residual_" << k;
    os << '\n';
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.9g", v);
        os << buf;
    };
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        const auto& steps = trajectories[t].steps;
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const TrajectoryStep& s = steps[i];
            os << t << ',' << i;
            for (Eigen::Index j = 0; j < s.state.size(); ++j) put(s.state(j));
            // The final state has no control; leave those cells empty.
            if (s.u.size() == 2) {
                put(s.u(0));
                put(s.u(1));
            } else {
                os << ",,";
            }
            for (double h : s.h_e) put(h);
            if (s.residual.size() == m) {
                for (double r : s.residual) put(r);
            } else {
                for (std::size_t k = 0; k < m; ++k) os << ',';
            }
            os << '\n';
        }
    }
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

}  // namespace

RunResult run_experiment(const RunOptions& options, const std::filesystem::path& out_dir) {
    RunResult result;
    result.run = resolve(options);
    result.out_dir = out_dir;
    const std::unique_ptr<Task> task = make_task(result.run);
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os = open_out(out_dir / "config.txt");
        write_config(os, result.run);
    }
    result.train = train(options.model, *task, result.run.train);
    {
        std::ofstream os = open_out(out_dir / "metrics.csv");
        write_metrics_csv(os, result.train.history);
    }
    if (const auto* fit = dynamic_cast<const FittingTask*>(task.get())) {
        std::ofstream os = open_out(out_dir / "predictions.csv");
        write_predictions_csv(os, fit->predictions(result.train.model, result.run.train));
    } else if (const auto* uni = dynamic_cast<const UnicycleTask*>(task.get())) {
        std::ofstream os = open_out(out_dir / "trajectory.csv");
        write_trajectory_csv(os, uni->test_trajectories(result.train.model, result.run.train));
    }
    return result;
}

}  // namespace hardnet::exp
