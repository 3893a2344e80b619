#pragma once

#include <cstdint>

#include "hardnet/mlp.hpp"

namespace hardnet::nn {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Optimizer {
public:
    Optimizer(const Mlp& net, OptimizerConfig config);

    /// Applies one update in place. Gradient shapes must mirror the network.
    void step(Mlp& net, const MlpGrads& grads);

    std::uint64_t steps_taken() const { return step_; }
    const OptimizerConfig& config() const { return config_; }

private:
    OptimizerConfig config_;
    std::uint64_t step_ = 0;
    MlpGrads m_;
    MlpGrads v_;
};

}  // namespace hardnet::nn
