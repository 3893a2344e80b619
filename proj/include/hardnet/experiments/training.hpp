#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hardnet/baselines.hpp"
#include "hardnet/constraints.hpp"
#include "hardnet/mlp.hpp"

namespace hardnet::exp {

enum class ModelKind { nn, soft, dc3, hardnet_aff, hardnet_cvx, nn_proj, soft_proj };

ModelKind parse_model(const std::string& name);
/// CLI spelling, e.g. "hardnet-aff".
std::string to_string(ModelKind kind);

/// True when the network predicts only the free coordinates.
bool predicts_free_part(ModelKind kind);
bool uses_soft_penalty(ModelKind kind);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double lr = 1e-3;
    /// Epochs trained with the projection layer disabled (hardnet variants).
    int warm_start_epochs = 0;
    std::uint64_t seed = 0;
    int hidden_width = 200;
    int hidden_layers = 2;
    /// Evaluate and log every this many epochs (the last epoch is always logged).
    int log_every = 10;
    baselines::SoftPenaltyConfig soft;
    baselines::Dc3Config dc3;
    /// Residual above which a constraint counts as violated.
    double count_tol = 1e-6;
    /// When false, time_ms is written as 0 so output files are reproducible byte for byte.
    bool record_timing = true;
};

struct Model {
    ModelKind kind = ModelKind::nn;
    nn::Mlp net;
};

/// Whether the projection (or correction) is part of the forward pass.
struct HeadMode {
    bool projection = true;
};

/// Maps a raw network output node to the model's full output node.
/// `reduced` may be null for kinds that do not need it.
ad::NodeId apply_head(ad::Tape& tape, const Model& model, ad::NodeId raw, const ConstraintEval& ev,
                      const std::shared_ptr<const ReducedConstraints>& reduced, const TrainConfig& cfg,
                      HeadMode mode);

/// Inference-time counterpart of apply_head, including test-time projections.
Vector apply_head(const Model& model, const Vector& raw, const ConstraintEval& ev,
                  const std::shared_ptr<const ReducedConstraints>& reduced, const TrainConfig& cfg);

struct MetricsRow {
    std::string task;
    std::string model;
    std::uint64_t seed = 0;
    int epoch = 0;
    double loss = 0.0;
    double metric = 0.0;
    ViolationMetrics violations;
    double time_ms = 0.0;

    static std::string csv_header();
    std::string csv() const;
};

struct Evaluation {
    MetricsRow row;
    /// Largest per-sample inequality violation seen anywhere in the test pass.
    double worst_ineq = 0.0;
    double worst_eq = 0.0;
    /// Task-specific extras (unicycle: smallest h_ellipse along any trajectory).
    double min_barrier = 0.0;
    int projection_fallbacks = 0;
};

class Task {
public:
    virtual ~Task() = default;

    virtual std::string name() const = 0;
    virtual int input_size() const = 0;
    virtual int output_size() const = 0;
    virtual int n_eq() const = 0;
    virtual std::size_t train_size() const = 0;

    /// Scalar training loss of sample `index` on the tape.
    virtual ad::NodeId sample_loss(const Model& model, const nn::MlpBinding& binding, ad::Tape& tape,
                                   std::size_t index, const TrainConfig& cfg, HeadMode mode) const = 0;

    virtual Evaluation evaluate(const Model& model, const TrainConfig& cfg) const = 0;

    /// Empty when the constraint set satisfies the reduction assumptions, else a reason.
    virtual std::string check_constraints() const = 0;
};

struct TrainResult {
    Model model;
    std::vector<MetricsRow> history;
    std::vector<Evaluation> evaluations;
};

Model make_model(ModelKind kind, const Task& task, const TrainConfig& cfg);

/// Deterministic given cfg.seed. Epoch 0 is the untrained model.
TrainResult train(ModelKind kind, const Task& task, const TrainConfig& cfg);

}  // namespace hardnet::exp
