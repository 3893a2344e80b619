#include "hardnet/experiments/training.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hardnet/hardnet_aff.hpp"
#include "hardnet/hardnet_cvx.hpp"
#include "hardnet/optimizer.hpp"

namespace hardnet::exp {

ModelKind parse_model(const std::string& name) {
    if (name == "nn") return ModelKind::nn;
    if (name == "soft") return ModelKind::soft;
    if (name == "dc3") return ModelKind::dc3;
    if (name == "hardnet-aff") return ModelKind::hardnet_aff;
    if (name == "hardnet-cvx") return ModelKind::hardnet_cvx;
    if (name == "nn-proj") return ModelKind::nn_proj;
    if (name == "soft-proj") return ModelKind::soft_proj;
    throw std::invalid_argument("unknown model '" + name + "'");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::nn: return "nn";
        case ModelKind::soft: return "soft";
        case ModelKind::dc3: return "dc3";
        case ModelKind::hardnet_aff: return "hardnet-aff";
        case ModelKind::hardnet_cvx: return "hardnet-cvx";
        case ModelKind::nn_proj: return "nn-proj";
        case ModelKind::soft_proj: return "soft-proj";
    }
    return "unknown";
}

bool predicts_free_part(ModelKind kind) {
    return kind == ModelKind::dc3 || kind == ModelKind::hardnet_aff;
}

bool uses_soft_penalty(ModelKind kind) {
    return kind == ModelKind::soft || kind == ModelKind::soft_proj;
}

ad::NodeId apply_head(ad::Tape& tape, const Model& model, ad::NodeId raw, const ConstraintEval& ev,
                      const std::shared_ptr<const ReducedConstraints>& reduced, const TrainConfig& cfg,
                      HeadMode mode) {
    switch (model.kind) {
        case ModelKind::nn:
        case ModelKind::soft:
        case ModelKind::nn_proj:
        case ModelKind::soft_proj:
            return raw;
        case ModelKind::dc3:
            return baselines::dc3_correct(tape, raw, *reduced, cfg.dc3);
        case ModelKind::hardnet_aff:
            return mode.projection ? aff::project_aff(tape, raw, reduced) : aff::lift(tape, raw, *reduced);
        case ModelKind::hardnet_cvx:
            return mode.projection ? cvx::project_cvx(tape, raw, cvx::ConvexSet::polyhedron(ev)) : raw;
    }
    throw std::logic_error("apply_head: unknown model kind");
}

Vector apply_head(const Model& model, const Vector& raw, const ConstraintEval& ev,
                  const std::shared_ptr<const ReducedConstraints>& reduced, const TrainConfig& cfg) {
    switch (model.kind) {
        case ModelKind::nn:
        case ModelKind::soft:
            return raw;
        case ModelKind::nn_proj:
        case ModelKind::soft_proj:
            if (!reduced) return baselines::test_time_project(raw, ev, baselines::ProjectionRoute::convex);
            return aff::project_aff(reduced->free_part(raw), reduced).y;
        case ModelKind::dc3:
            return baselines::dc3_correct(reduced->lift(raw), *reduced, cfg.dc3);
        case ModelKind::hardnet_aff:
            return aff::project_aff(raw, reduced).y;
        case ModelKind::hardnet_cvx:
            return cvx::project_cvx(raw, cvx::ConvexSet::polyhedron(ev)).z;
    }
    throw std::logic_error("apply_head: unknown model kind");
}

std::string MetricsRow::csv_header() {
    return "task,model,seed,epoch,loss,metric,ineq_max,ineq_mean,ineq_count,eq_max,eq_mean,eq_count,time_ms";
}

std::string MetricsRow::csv() const {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.6g", task.c_str(),
                  model.c_str(), static_cast<unsigned long long>(seed), epoch, loss, metric, violations.ineq_max,
                  violations.ineq_mean, violations.ineq_count, violations.eq_max, violations.eq_mean,
                  violations.eq_count, time_ms);
    return buf;
}

Model make_model(ModelKind kind, const Task& task, const TrainConfig& cfg) {
    if (cfg.hidden_layers < 0 || cfg.hidden_width < 1) throw std::invalid_argument("invalid network size");
    std::vector<int> sizes{task.input_size()};
    for (int k = 0; k < cfg.hidden_layers; ++k) sizes.push_back(cfg.hidden_width);
    sizes.push_back(predicts_free_part(kind) ? task.output_size() - task.n_eq() : task.output_size());
    return Model{kind, nn::mlp_new(sizes, cfg.seed)};
}

namespace {

bool has_projection(ModelKind kind) {
    return kind == ModelKind::hardnet_aff || kind == ModelKind::hardnet_cvx;
}

bool needs_reduction(ModelKind kind) {
    return kind == ModelKind::hardnet_aff || kind == ModelKind::dc3 || kind == ModelKind::nn_proj ||
           kind == ModelKind::soft_proj;
}

}  // namespace

TrainResult train(ModelKind kind, const Task& task, const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (cfg.log_every < 1) throw std::invalid_argument("train: log_every must be >= 1");
    if (cfg.warm_start_epochs < 0) throw std::invalid_argument("train: warm start must be >= 0");
    if (needs_reduction(kind)) {
        const std::string problem = task.check_constraints();
        if (!problem.empty()) throw std::runtime_error("train: constraint assumptions fail: " + problem);
    }

    TrainResult result;
    result.model = make_model(kind, task, cfg);
    nn::Mlp& net = result.model.net;
    nn::Optimizer optimizer(net, nn::OptimizerConfig{nn::OptimizerKind::adam, cfg.lr});
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);

    const std::size_t n = task.train_size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto log = [&](int epoch, double loss) {
        Evaluation ev = task.evaluate(result.model, cfg);
        ev.row.epoch = epoch;
        ev.row.loss = loss;
        ev.row.seed = cfg.seed;
        ev.row.model = to_string(kind);
        ev.row.task = task.name();
        result.history.push_back(ev.row);
        result.evaluations.push_back(std::move(ev));
    };

    auto run_batch = [&](std::span<const std::size_t> batch, HeadMode mode, bool update) {
        ad::Tape tape;
        const nn::MlpBinding binding = nn::bind(net, tape);
        ad::NodeId total = tape.constant(Tensor::scalar(0.0));
        for (std::size_t idx : batch) total = tape.add(total, task.sample_loss(result.model, binding, tape, idx, cfg, mode));
        const ad::NodeId mean = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
        if (update) {
            nn::MlpGrads grads = nn::MlpGrads::zeros_like(net);
            grads.add(tape.backward(mean), binding);
            optimizer.step(net, grads);
        }
        return tape.value(total).item();
    };

    // Epoch 0: the untrained model.
    {
        double loss = 0.0;
        const HeadMode mode{!(has_projection(kind) && cfg.warm_start_epochs > 0)};
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n - start);
            loss += run_batch(std::span<const std::size_t>(order).subspan(start, len), mode, false);
        }
        log(0, n > 0 ? loss / static_cast<double>(n) : 0.0);
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const HeadMode mode{!(has_projection(kind) && epoch <= cfg.warm_start_epochs)};
        double loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n - start);
            loss += run_batch(std::span<const std::size_t>(order).subspan(start, len), mode, true);
        }
        if (epoch % cfg.log_every == 0 || epoch == cfg.epochs) log(epoch, loss / static_cast<double>(n));
    }
    return result;
}

}  // namespace hardnet::exp
