#pragma once

#include <cstdint>
#include <vector>

#include "hardnet/experiments/training.hpp"

namespace hardnet::exp {

/// Random instance of  min_y 1/2 y^T Q y + p^T sin(y)  s.t.  A y <= b, C y = x
/// with x in [-1, 1]^n_eq.
struct NonconvexProblem {
    Matrix Q;
    Vector p;
    Matrix A;
    Vector b;
    Matrix C;
    std::uint64_t seed = 0;

    int n() const { return static_cast<int>(Q.rows()); }
    int n_eq() const { return static_cast<int>(C.rows()); }
    int n_ineq() const { return static_cast<int>(A.rows()); }
    ConstraintEval constraints_at(const Vector& x) const;
};

/// Q = G^T G + 1e-3 I; p, A, C standard normal (C resampled until full row
/// rank); b_i = sum_j |(A C^+)_ij| + 0.5 so that C^+ x is feasible on the box.
NonconvexProblem gen_nonconvex_task(int n, int n_eq, int n_ineq, std::uint64_t seed);

double nonconvex_objective(const Vector& y, const NonconvexProblem& problem);
ad::NodeId nonconvex_objective(ad::Tape& tape, ad::NodeId y, const NonconvexProblem& problem);

struct NonconvexOptions {
    int n = 20;
    int n_eq = 10;
    int n_ineq = 10;
    int train_samples = 2000;
    int test_samples = 1000;
    std::uint64_t problem_seed = 0;
    std::uint64_t data_seed = 0;
};

class NonconvexTask final : public Task {
public:
    explicit NonconvexTask(NonconvexOptions options = {});

    std::string name() const override { return "nonconvex"; }
    int input_size() const override { return problem_.n_eq(); }
    int output_size() const override { return problem_.n(); }
    int n_eq() const override { return problem_.n_eq(); }
    std::size_t train_size() const override { return train_x_.size(); }

    ad::NodeId sample_loss(const Model& model, const nn::MlpBinding& binding, ad::Tape& tape, std::size_t index,
                           const TrainConfig& cfg, HeadMode mode) const override;
    Evaluation evaluate(const Model& model, const TrainConfig& cfg) const override;
    std::string check_constraints() const override;

    const NonconvexProblem& problem() const { return problem_; }
    const AffineConstraintSpec& spec() const { return spec_; }
    const std::vector<Vector>& test_inputs() const { return test_x_; }

private:
    std::shared_ptr<const ReducedConstraints> reduced_at(const Vector& x) const;

    NonconvexOptions options_;
    NonconvexProblem problem_;
    AffineConstraintSpec spec_;
    std::vector<Vector> train_x_;
    std::vector<Vector> test_x_;
    mutable std::shared_ptr<const ReducedConstraints> base_reduced_;
};

}  // namespace hardnet::exp
