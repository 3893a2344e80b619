#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hardnet/experiments/fitting.hpp"
#include "hardnet/experiments/nonconvex.hpp"
#include "hardnet/experiments/training.hpp"
#include "hardnet/experiments/unicycle.hpp"

namespace hardnet::exp {

enum class Scale { small, paper };

Scale parse_scale(const std::string& name);
std::string to_string(Scale scale);

/// Everything needed to reproduce one run. Negative / zero sentinel fields
/// take the per-task default (see resolve()).
struct RunOptions {
    std::string task = "fitting";
    ModelKind model = ModelKind::hardnet_aff;
    std::uint64_t seed = 0;
    std::uint64_t data_seed = 0;
    int epochs = -1;
    int warm_start = 0;
    int batch_size = -1;
    double lr = -1.0;
    int hidden_width = -1;
    int hidden_layers = -1;
    int log_every = -1;
    Scale scale = Scale::small;
    bool record_timing = true;
    /// Override of the training-set size (samples or start states); 0 = default.
    int train_samples = 0;
    int test_samples = 0;
};

/// Fully resolved configuration of a run.
struct ResolvedRun {
    RunOptions options;
    TrainConfig train;
    FittingOptions fitting;
    NonconvexOptions nonconvex;
    UnicycleOptions unicycle;
};

ResolvedRun resolve(const RunOptions& options);
std::unique_ptr<Task> make_task(const ResolvedRun& run);

/// key = value lines for config.txt.
std::vector<std::pair<std::string, std::string>> config_entries(const ResolvedRun& run);

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
void write_config(std::ostream& os, const ResolvedRun& run);
void write_predictions_csv(std::ostream& os, const std::vector<FittingPrediction>& preds);
void write_trajectory_csv(std::ostream& os, const std::vector<Trajectory>& trajectories);

struct RunResult {
    ResolvedRun run;
    TrainResult train;
    std::filesystem::path out_dir;
};

/// Trains, evaluates, and writes metrics.csv, config.txt and the task's
/// plotting file into out_dir (created if missing).
RunResult run_experiment(const RunOptions& options, const std::filesystem::path& out_dir);

}  // namespace hardnet::exp
