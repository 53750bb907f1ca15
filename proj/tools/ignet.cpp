#include <CLI11.hpp>

#include <charconv>
#include <iostream>
#include <map>

#include "ignet/cli.hpp"

namespace {

const std::map<std::string, ignet::Task> kTasks{{"classify", ignet::Task::Classify}, {"regress", ignet::Task::Regress}};

void add_task_flag(CLI::App* cmd, std::optional<ignet::Task>& task)
{
    cmd->add_option_function<std::string>(
           "--task", [&task](const std::string& v) { task = kTasks.at(v); }, "classify or regress (overrides the config)")
        ->check(CLI::IsMember({"classify", "regress"}));
}

void add_run_flags(CLI::App* cmd, ignet::cli::RunOptions& opts)
{
    cmd->add_option("--config", opts.config, "experiment config file")->required();
    cmd->add_option("--data", opts.data, "directory of labelled .pgm files (default: synthetic corpus)");
    cmd->add_option("--seed", opts.seed, "master seed");
    cmd->add_option("--workers", opts.workers, "worker threads, 0 = all cores (default: $IGNET_WORKERS or 1)");
    add_task_flag(cmd, opts.task);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Convolutional network training with initialization diagnostics"};
    app.require_subcommand(1);

    ignet::cli::RunOptions diag_opts;
    auto* diag = app.add_subcommand("diagnose", "initialize a network and report derivative MAVs");
    add_run_flags(diag, diag_opts);
    diag->add_option("--probe", diag_opts.probe, "number of probe samples");

    ignet::cli::RunOptions train_opts;
    auto* train = app.add_subcommand("train", "cross-validated training; writes model, history and summary");
    add_run_flags(train, train_opts);
    train->add_option("--out", train_opts.out, "output directory")->required();

    ignet::cli::EvaluateOptions eval_opts;
    auto* eval = app.add_subcommand("evaluate", "evaluate a saved model on a data directory");
    eval->add_option("--model", eval_opts.model, "model file")->required();
    eval->add_option("--data", eval_opts.data, "directory of labelled .pgm files")->required();
    eval->add_option("--workers", eval_opts.workers, "worker threads");
    add_task_flag(eval, eval_opts.task);

    ignet::cli::SynthOptions synth_opts;
    auto* synth = app.add_subcommand("synth", "write a synthetic labelled corpus");
    synth->add_option("--out", synth_opts.out, "output directory")->required();
    synth->add_option("--classes", synth_opts.classes, "number of classes");
    synth->add_option("--per-class", synth_opts.per_class, "images per class");
    synth->add_option("--seed", synth_opts.seed, "seed");
    synth->add_option_function<std::string>(
        "--size",
        [&synth_opts](const std::string& v) {
            const auto x = v.find('x');
            std::size_t rows = 0, cols = 0;
            const bool ok = x != std::string::npos &&
                            std::from_chars(v.data(), v.data() + x, rows).ptr == v.data() + x &&
                            std::from_chars(v.data() + x + 1, v.data() + v.size(), cols).ptr == v.data() + v.size();
            if (!ok)
                throw CLI::ValidationError("--size", "expected ROWSxCOLS");
            synth_opts.rows = rows;
            synth_opts.cols = cols;
        },
        "image size ROWSxCOLS (default 36x58)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ignet::cli::kConfigError;
    }

    if (*diag)
        return ignet::cli::cmd_diagnose(diag_opts, std::cout, std::cerr);
    if (*train)
        return ignet::cli::cmd_train(train_opts, std::cout, std::cerr);
    if (*eval)
        return ignet::cli::cmd_evaluate(eval_opts, std::cout, std::cerr);
    return ignet::cli::cmd_synth(synth_opts, std::cout, std::cerr);
}
