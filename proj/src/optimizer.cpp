#include "hardnet/optimizer.hpp"

#include <cmath>

#include "hardnet/errors.hpp"

namespace hardnet::nn {

Optimizer::Optimizer(const Mlp& net, OptimizerConfig config)
    : config_(config), m_(MlpGrads::zeros_like(net)), v_(MlpGrads::zeros_like(net)) {
    if (!(config_.lr > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
}

namespace {

template <typename Param>
void check_shape(const Param& p, const Param& g, std::size_t layer) {
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
        throw ShapeError("optimizer_step: layer " + std::to_string(layer) + " gradient shape " +
                         shape_string(g.rows(), g.cols()) + " vs parameter " + shape_string(p.rows(), p.cols()));
    }
}

template <typename Param>
void adam_update(Param& p, const Param& g, Param& m, Param& v, const OptimizerConfig& c, double bc1, double bc2) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace

void Optimizer::step(Mlp& net, const MlpGrads& grads) {
    if (grads.weights.size() != net.num_layers() || grads.biases.size() != net.num_layers()) {
        throw ShapeError("optimizer_step: gradient has " + std::to_string(grads.weights.size()) +
                         " layers, network has " + std::to_string(net.num_layers()));
    }
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
        check_shape(net.weights[k], grads.weights[k], k);
        check_shape(net.biases[k], grads.biases[k], k);
    }
    ++step_;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t k = 0; k < net.num_layers(); ++k) {
            net.weights[k] -= config_.lr * grads.weights[k];
            net.biases[k] -= config_.lr * grads.biases[k];
        }
        return;
    }
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
        adam_update(net.weights[k], grads.weights[k], m_.weights[k], v_.weights[k], config_, bc1, bc2);
        adam_update(net.biases[k], grads.biases[k], m_.biases[k], v_.biases[k], config_, bc1, bc2);
    }
}

}  // namespace hardnet::nn
