#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hardnet/experiments/run_output.hpp"

int main(int argc, char** argv) {
    CLI::App app{"hardnet: constrained neural network experiments"};
    app.require_subcommand(1);

    hardnet::exp::RunOptions opts;
    std::string model = "hardnet-aff";
    std::string scale = "small";
    std::string out = "out";
    bool no_timing = false;

    CLI::App* run = app.add_subcommand("run", "train one model on one task and write CSV output");
    run->add_option("--task", opts.task, "fitting | nonconvex | unicycle")
        ->required()
        ->check(CLI::IsMember({"fitting", "nonconvex", "unicycle"}));
    run->add_option("--model", model, "nn | soft | dc3 | hardnet-aff | hardnet-cvx | nn-proj | soft-proj")
        ->check(CLI::IsMember({"nn", "soft", "dc3", "hardnet-aff", "hardnet-cvx", "nn-proj", "soft-proj"}))
        ->capture_default_str();
    run->add_option("--seed", opts.seed, "network initialization and shuffling seed")->capture_default_str();
    run->add_option("--data-seed", opts.data_seed, "seed of the task data / problem instance")->capture_default_str();
    run->add_option("--epochs", opts.epochs, "training epochs (default: per task)");
    run->add_option("--warm-start", opts.warm_start, "epochs trained with the projection disabled")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    run->add_option("--batch-size", opts.batch_size, "minibatch size (default: per task)");
    run->add_option("--lr", opts.lr, "Adam learning rate (default: per task)");
    run->add_option("--hidden-width", opts.hidden_width, "hidden layer width (default: per task)");
    run->add_option("--hidden-layers", opts.hidden_layers, "number of hidden layers (default: per task)");
    run->add_option("--log-every", opts.log_every, "evaluate every N epochs (default: per task)");
    run->add_option("--train-samples", opts.train_samples, "override training set size");
    run->add_option("--test-samples", opts.test_samples, "override test set size (nonconvex, unicycle)");
    run->add_option("--out", out, "output directory")->capture_default_str();
    run->add_option("--scale", scale, "small | paper")->check(CLI::IsMember({"small", "paper"}))->capture_default_str();
    run->add_flag("--no-timing", no_timing, "write time_ms as 0 so repeated runs produce identical files");

    CLI11_PARSE(app, argc, argv);

    try {
        opts.model = hardnet::exp::parse_model(model);
        opts.scale = hardnet::exp::parse_scale(scale);
        opts.record_timing = !no_timing;
        const hardnet::exp::RunResult result = hardnet::exp::run_experiment(opts, out);
        const hardnet::exp::MetricsRow& last = result.train.history.back();
        std::printf("%s %s seed=%llu epoch=%d metric=%.6g ineq_max=%.3g ineq_count=%.3g eq_max=%.3g -> %s\n",
                    last.task.c_str(), last.model.c_str(), static_cast<unsigned long long>(last.seed), last.epoch,
                    last.metric, last.violations.ineq_max, last.violations.ineq_count, last.violations.eq_max,
                    result.out_dir.string().c_str());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
