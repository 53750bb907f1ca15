#pragma once

// Command implementations behind the `ignet` executable. Each returns the
// process exit code:
//
//   0  success
//   1  configuration error (bad config, malformed model, inconsistent network)
//   2  data error (missing/empty/unreadable data, unwritable output)
//   3  diagnosis found loss-derivative MAVs outside the window
//   4  numerical divergence during training

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "init_diag.hpp"
#include "model_io.hpp"
#include "parallel.hpp"
#include "train.hpp"

namespace ignet::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kDiagnosticFlags = 3, kDivergence = 4 };

struct RunOptions {
    std::filesystem::path config;
    std::filesystem::path data; // empty: synthesize from the config's synth.* keys
    std::filesystem::path out;
    std::uint64_t seed = 1;
    std::optional<std::size_t> workers;
    std::optional<Task> task;
    std::optional<std::size_t> probe;
};

struct EvaluateOptions {
    std::filesystem::path model;
    std::filesystem::path data;
    std::optional<Task> task;
    std::optional<std::size_t> workers;
};

struct SynthOptions {
    std::filesystem::path out;
    std::size_t classes = 3;
    std::size_t per_class = 40;
    std::size_t rows = 36;
    std::size_t cols = 58;
    std::uint64_t seed = 1;
};

inline const char* kModelFile = "model.ign";
inline const char* kHistoryFile = "history.csv";
inline const char* kSummaryFile = "summary.txt";

// --workers wins; otherwise IGNET_WORKERS; otherwise 1. Zero means all cores.
inline std::size_t resolve_workers(std::optional<std::size_t> flag)
{
    if (flag)
        return *flag;
    if (const char* env = std::getenv("IGNET_WORKERS"); env && *env) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0')
            throw ConfigError(std::string("IGNET_WORKERS must be a non-negative integer, got '") + env + "'");
        return static_cast<std::size_t>(v);
    }
    return 1;
}

inline std::string format_metrics(const Metrics& m, Task task)
{
    char line[256];
    if (task == Task::Classify)
        std::snprintf(line, sizeof line, "accuracy=%.6f loss=%.10g count=%zu", m.accuracy, m.loss, m.count);
    else
        std::snprintf(line, sizeof line, "mape=%.6f mae=%.10g loss=%.10g count=%zu", m.mape, m.mae, m.loss, m.count);
    return line;
}

// Runs body and maps library errors to exit codes, printing the message to err.
template <typename Body>
int guarded(std::ostream& err, Body&& body)
{
    try {
        return body();
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const Error& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }
}

namespace detail {

struct Experiment {
    ExperimentConfig config;
    std::vector<Sample> originals;
    PreparedData data;
    Network net;
    InitAmplitudes amplitudes;
};

inline Experiment set_up(const RunOptions& opts)
{
    Experiment ex;
    ex.config = load_config(opts.config);
    if (opts.task)
        ex.config.task = *opts.task;
    if (opts.probe)
        ex.config.probe = *opts.probe;
    if (ex.config.probe == 0)
        throw ConfigError("probe count must be at least 1");
    const ExperimentConfig& cfg = ex.config;

    if (opts.data.empty())
        ex.originals = synth_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.rows, cfg.cols,
                                     derive_seed(opts.seed, {0x5e7}));
    else
        ex.originals = load_dataset(opts.data, cfg.rows, cfg.cols);

    ex.data = prepare_data(ex.originals, cfg.task, cfg.encoder, cfg.augment, cfg.cv.validation_fraction, opts.seed);
    const std::size_t outputs = cfg.task == Task::Classify ? ex.data.categories.size() : 1;
    ex.net = build_from_config(cfg, outputs);
    ex.amplitudes = resolve_amplitudes(cfg, ex.net);
    Rng init_rng = derive_rng(opts.seed, {0x1417});
    init_weights(ex.net, ex.amplitudes, init_rng);
    return ex;
}

// Probe samples: a seeded selection of un-augmented learn-test originals.
inline std::vector<Example> probe_set(const Experiment& ex, std::uint64_t seed)
{
    std::vector<std::size_t> groups_first; // first augmented copy of each original is the original itself
    const Dataset& lt = ex.data.learn_test;
    for (std::size_t i = 0; i < lt.size(); ++i)
        if (i == 0 || lt.groups[i] != lt.groups[i - 1])
            groups_first.push_back(i);
    Rng rng = derive_rng(seed, {0xd1a6});
    std::shuffle(groups_first.begin(), groups_first.end(), rng);
    groups_first.resize(std::min(groups_first.size(), ex.config.probe));
    std::sort(groups_first.begin(), groups_first.end());
    std::vector<Example> probe;
    for (std::size_t i : groups_first)
        probe.push_back(lt.examples[i]);
    return probe;
}

inline std::vector<Example> encode_for_model(const std::vector<Sample>& samples, const Model& model, Task task)
{
    std::vector<Example> out;
    out.reserve(samples.size());
    if (task == Task::Classify) {
        std::vector<LabelRecord> records;
        for (const auto& s : samples)
            records.push_back(s.label);
        const OneHotEncoding enc = encode_with_table(records, model.encoder, model.categories);
        if (enc.category_count() != model.net.output_shape().size())
            throw ConfigError("model output count does not match its category table");
        for (std::size_t i = 0; i < samples.size(); ++i)
            out.push_back({samples[i].image, enc.vectors[i]});
    } else {
        if (model.net.output_shape().size() != 1)
            throw ConfigError("regression needs a single-output model");
        for (const auto& s : samples)
            out.push_back({s.image, {regression_target(s.label)}});
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out)
        throw DataError("cannot write " + path.string());
}

} // namespace detail

inline int cmd_diagnose(const RunOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const detail::Experiment ex = detail::set_up(opts);
        WorkerPool pool(resolve_workers(opts.workers));
        const std::vector<Example> probe = detail::probe_set(ex, opts.seed);
        const DiagnosticReport report = diagnose(ex.net, ex.amplitudes, probe, ex.config.window, &pool);
        out << render_report(report);
        return report.all_in_window() ? kOk : kDiagnosticFlags;
    });
}

inline int cmd_train(const RunOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        detail::Experiment ex = detail::set_up(opts);
        std::error_code ec;
        std::filesystem::create_directories(opts.out, ec);
        if (ec || !std::filesystem::is_directory(opts.out))
            throw DataError("cannot create output directory " + opts.out.string());

        WorkerPool pool(resolve_workers(opts.workers));
        const Task task = ex.config.task;
        const TrainResult result =
            train(ex.net, ex.data.learn_test, ex.data.validation, ex.config.cv, ex.config.opt, task, opts.seed, &pool);

        Model model{ex.net, task, ex.config.encoder, ex.data.categories, result.freeze_masks};
        save_model(opts.out / kModelFile, model);
        detail::write_text(opts.out / kHistoryFile, result.history.to_csv());

        const std::vector<Example> dataset = detail::encode_for_model(ex.originals, model, task);
        const HistoryRow& last = result.history.rows.back();
        std::string summary;
        summary += "task " + std::string(task == Task::Classify ? "classify" : "regress") + "\n";
        summary += "epochs " + std::to_string(result.history.epochs_run()) + "\n";
        std::size_t early = 0;
        for (StopReason s : result.history.fold_stops)
            early += s == StopReason::EarlyStop;
        summary += "early_stopped_folds " + std::to_string(early) + "/" + std::to_string(ex.config.cv.folds) + "\n";
        summary += "final_train_loss " + std::to_string(last.train_loss) + "\n";
        summary += "test " + format_metrics(last.test, task) + "\n";
        summary += "validation " + format_metrics(last.validation, task) + "\n";
        summary += "dataset " + format_metrics(evaluate(ex.net, dataset, task, &pool), task) + "\n";
        detail::write_text(opts.out / kSummaryFile, summary);
        out << summary;
        return kOk;
    });
}

inline int cmd_evaluate(const EvaluateOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const Model model = load_model(opts.model);
        const Task task = opts.task.value_or(model.task);
        const Shape3 in = model.net.input_shape;
        if (in.channels != 1)
            throw ConfigError("model expects " + std::to_string(in.channels) + "-channel input, images have one");
        const std::vector<Sample> samples = load_dataset(opts.data, in.rows, in.cols);
        const std::vector<Example> examples = detail::encode_for_model(samples, model, task);
        WorkerPool pool(resolve_workers(opts.workers));
        out << "dataset " << format_metrics(evaluate(model.net, examples, task, &pool), task) << '\n';
        return kOk;
    });
}

inline int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const std::vector<Sample> samples = synth_dataset(opts.classes, opts.per_class, opts.rows, opts.cols, opts.seed);
        write_dataset(opts.out, samples);
        out << "wrote " << samples.size() << " images to " << opts.out.string() << '\n';
        return kOk;
    });
}

} // namespace ignet::cli
