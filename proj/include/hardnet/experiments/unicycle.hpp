#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "hardnet/experiments/training.hpp"

namespace hardnet::exp {

/// Ellipse ((x - cx)/rx)^2 + ((y - cy)/ry)^2 <= 1 to be avoided.
struct Obstacle {
    double cx = 0.0;
    double cy = 0.0;
    double rx = 1.0;
    double ry = 1.0;
};

/// Proportional law toward the origin:
///   a_lin = k_f e_f - k_v v,  e_f = -(x cos th + y sin th)
///   a_ang = k_l e_l - k_w w,  e_l = x sin th - y cos th
struct NominalGains {
    double k_f = 2.0;
    double k_v = 1.0;
    double k_l = 2.0;
    double k_w = 1.0;
};

/// State (x_p, y_p, theta, v, w), control (a_lin, a_ang).
struct UnicycleParams {
    std::vector<Obstacle> obstacles{{-2.2, 0.3, 0.5, 0.35}, {-1.0, -0.5, 0.4, 0.4}};
    double kappa = 5.0;
    double alpha = 5.0;
    double l = 0.1;
    double dt = 0.02;
    int n_step = 50;
    std::array<double, 5> q_diag{100.0, 100.0, 0.0, 0.1, 0.1};
    std::array<double, 2> r_diag{0.1, 0.1};
    NominalGains gains;
    std::array<double, 5> start_low{-4.0, 0.0, -0.78539816339744831, 0.0, 0.0};
    std::array<double, 5> start_high{-3.5, 0.5, -0.39269908169872414, 0.0, 0.0};

    /// Throws std::invalid_argument on non-positive dt, radii or gains.
    void validate() const;
};

/// Explicit Euler step.
Vector unicycle_step(const Vector& state, const Vector& u, double dt);
ad::NodeId unicycle_step(ad::Tape& tape, ad::NodeId state, ad::NodeId u, double dt);

/// Ellipse barrier evaluated at the point offset by l along the heading.
double h_ellipse(const Vector& state, const Obstacle& obs, double l);
double h_ellipse_dot(const Vector& state, const Obstacle& obs, double l);
/// HOCBF h = h_ellipse_dot + kappa h_ellipse.
double hocbf_value(const Vector& state, const Obstacle& obs, double kappa, double l);
/// Analytic gradient of hocbf_value with respect to the state.
Vector hocbf_gradient(const Vector& state, const Obstacle& obs, double kappa, double l);

/// grad h . (f(x) + g(x) u) >= -alpha h  rewritten as  a_row . u <= b.
struct HocbfRow {
    Vector a_row;
    double b = 0.0;
    double h = 0.0;
    double h_e = 0.0;
    /// |a_row| < 1e-10; the row carries no information about u.
    bool degenerate = false;
};

HocbfRow hocbf_constraint(const Vector& state, const Obstacle& obs, double kappa, double alpha, double l);

/// Non-degenerate rows for every obstacle, as a polyhedron in u.
ConstraintEval hocbf_constraints(const Vector& state, const UnicycleParams& params);

Vector nominal_control(const Vector& state, const NominalGains& gains);
ad::NodeId nominal_control(ad::Tape& tape, ad::NodeId state, const NominalGains& gains);

/// argmin |u - u_ref| subject to all HOCBF rows at `state`.
Vector cbf_qp_controller(const Vector& state, const Vector& u_ref, const UnicycleParams& params);

using Policy = std::function<Vector(const Vector& state)>;
using TapePolicy = std::function<ad::NodeId(ad::Tape& tape, ad::NodeId state)>;

/// dt * sum_{i<n} x_i^T Q x_i + u_i^T R u_i.  n_step < 0 uses params.n_step.
double rollout_cost(const Policy& policy, const Vector& x0, const UnicycleParams& params, int n_step = -1);
ad::NodeId rollout_cost(ad::Tape& tape, const TapePolicy& policy, const Vector& x0, const UnicycleParams& params,
                        int n_step = -1);

struct TrajectoryStep {
    Vector state;
    Vector u;                      // empty for the final state
    std::vector<double> h_e;       // per obstacle
    std::vector<double> residual;  // a_row . u - b per obstacle, 0 if degenerate
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;  // n_step + 1 entries
    double cost = 0.0;
    std::vector<double> accumulated_violation;  // per obstacle
    double min_h_e = 0.0;
};

Trajectory simulate(const Policy& policy, const Vector& x0, const UnicycleParams& params);

struct UnicycleOptions {
    UnicycleParams params;
    int train_states = 200;
    int test_states = 100;
    std::uint64_t data_seed = 0;
};

class UnicycleTask final : public Task {
public:
    explicit UnicycleTask(UnicycleOptions options = {});

    std::string name() const override { return "unicycle"; }
    int input_size() const override { return 5; }
    int output_size() const override { return 2; }
    int n_eq() const override { return 0; }
    std::size_t train_size() const override { return train_x_.size(); }

    ad::NodeId sample_loss(const Model& model, const nn::MlpBinding& binding, ad::Tape& tape, std::size_t index,
                           const TrainConfig& cfg, HeadMode mode) const override;
    Evaluation evaluate(const Model& model, const TrainConfig& cfg) const override;
    std::string check_constraints() const override;

    /// Closed-loop control of a trained model at one state. Increments
    /// *fallbacks when the affine layer had to defer to the convex one.
    Vector control(const Model& model, const Vector& state, const TrainConfig& cfg, int* fallbacks = nullptr) const;
    std::vector<Trajectory> test_trajectories(const Model& model, const TrainConfig& cfg) const;

    const UnicycleParams& params() const { return options_.params; }
    const std::vector<Vector>& test_states() const { return test_x_; }
    const std::vector<Vector>& train_states() const { return train_x_; }

private:
    UnicycleOptions options_;
    std::vector<Vector> train_x_;
    std::vector<Vector> test_x_;
};

}  // namespace hardnet::exp
