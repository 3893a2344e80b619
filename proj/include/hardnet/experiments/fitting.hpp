#pragma once

#include <vector>

#include "hardnet/experiments/training.hpp"

namespace hardnet::exp {

/// Piecewise target on [-2, 2]:
///   -5 sin(pi/2 (x+1))   x <= -1
///    0                   -1 < x <= 0
///    4 - 9 (x - 2/3)^2    0 < x <= 1
///    5 (1 - x) + 3        x > 1
double fitting_target(double x);

struct ScalarConstraint {
    double a = 0.0;
    double b = 0.0;
};

/// Single input-dependent halfspace a(x) y <= b(x) on the same four pieces.
ScalarConstraint fitting_constraint(double x);

AffineConstraintSpec fitting_constraint_spec();

struct FittingOptions {
    int train_samples = 50;
    double train_low = -1.2;
    double train_high = 1.2;
    int grid_points = 401;
    double grid_low = -2.0;
    double grid_high = 2.0;
    std::uint64_t data_seed = 0;
};

struct FittingPrediction {
    double x, target, prediction, a, b;
};

class FittingTask final : public Task {
public:
    explicit FittingTask(FittingOptions options = {});

    std::string name() const override { return "fitting"; }
    int input_size() const override { return 1; }
    int output_size() const override { return 1; }
    int n_eq() const override { return 0; }
    std::size_t train_size() const override { return train_x_.size(); }

    ad::NodeId sample_loss(const Model& model, const nn::MlpBinding& binding, ad::Tape& tape, std::size_t index,
                           const TrainConfig& cfg, HeadMode mode) const override;
    Evaluation evaluate(const Model& model, const TrainConfig& cfg) const override;
    std::string check_constraints() const override;

    std::vector<FittingPrediction> predictions(const Model& model, const TrainConfig& cfg) const;

    const std::vector<double>& train_x() const { return train_x_; }
    const std::vector<double>& grid() const { return grid_; }

private:
    FittingOptions options_;
    AffineConstraintSpec spec_;
    std::vector<double> train_x_;
    std::vector<double> grid_;
};

}  // namespace hardnet::exp
