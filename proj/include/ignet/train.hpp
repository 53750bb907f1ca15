#pragma once

// Cross-validated training: stratified k folds, several passes per fold with
// test and validation evaluation after each pass, and patience-based early
// stopping on the validation metric.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "backprop.hpp"
#include "error.hpp"
#include "network.hpp"
#include "optimize.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "regularize.hpp"

namespace ignet {

enum class Task { Classify, Regress };

struct CvConfig {
    std::size_t folds = 5;
    std::size_t repeats_per_fold = 10;
    std::size_t tolerance = 7;
    double validation_fraction = 1.0 / 6.0;

    void validate() const
    {
        if (folds < 2)
            throw ConfigError("cross-validation needs at least 2 folds");
        if (repeats_per_fold < 1)
            throw ConfigError("each fold needs at least one pass");
        if (tolerance < 1)
            throw ConfigError("early-stopping tolerance must be at least 1");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
            throw ConfigError("validation fraction must lie in (0, 1)");
    }
};

struct FoldSplit {
    std::vector<std::vector<std::size_t>> folds;
    std::vector<std::size_t> undersized_strata; // strata with fewer members than folds
};

// Deals each stratum's shuffled members round-robin over the folds, continuing
// the rotation across strata so fold sizes stay balanced. Every fold holds
// floor or ceil of (stratum size / k) members of each stratum.
inline FoldSplit stratified_kfold(std::span<const std::size_t> strata, std::size_t k, Rng& rng)
{
    if (k < 2)
        throw ConfigError("stratified split needs at least 2 folds");
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < strata.size(); ++i)
        members[strata[i]].push_back(i);
    FoldSplit split;
    split.folds.resize(k);
    std::size_t cursor = 0;
    for (auto& [stratum, idx] : members) {
        if (idx.size() < k)
            split.undersized_strata.push_back(stratum);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i)
            split.folds[(cursor + i) % k].push_back(idx[i]);
        cursor = (cursor + idx.size()) % k;
    }
    for (auto& f : split.folds)
        std::sort(f.begin(), f.end());
    return split;
}

struct HoldoutSplit {
    std::vector<std::size_t> learn_test;
    std::vector<std::size_t> validation;
};

// Per stratum, round(fraction * size) shuffled members go to validation.
inline HoldoutSplit stratified_holdout(std::span<const std::size_t> strata, double fraction, Rng& rng)
{
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("validation fraction must lie in (0, 1)");
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < strata.size(); ++i)
        members[strata[i]].push_back(i);
    HoldoutSplit split;
    for (auto& [stratum, idx] : members) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        split.validation.insert(split.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        split.learn_test.insert(split.learn_test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    }
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.learn_test.begin(), split.learn_test.end());
    return split;
}

// True once the last `tolerance` evaluations all failed to beat the best value
// seen before them.
inline bool early_stop_check(std::span<const double> history, std::size_t tolerance, bool higher_is_better)
{
    if (tolerance < 1)
        throw ConfigError("early-stopping tolerance must be at least 1");
    double best = 0.0;
    std::size_t streak = 0;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const double v = history[i];
        const bool improved = i == 0 || (higher_is_better ? v > best : v < best);
        if (improved) {
            best = v;
            streak = 0;
        } else {
            ++streak;
        }
    }
    return streak >= tolerance;
}

struct Metrics {
    double accuracy = 0.0; // percent of right guesses
    double mape = 0.0;     // percent, over non-zero targets
    double mae = 0.0;
    double loss = 0.0;
    std::size_t count = 0;
};

inline std::size_t argmax(std::span<const double> v)
{
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline Metrics evaluate(const Network& net, std::span<const Example> samples, Task task, WorkerPool* pool = nullptr)
{
    if (samples.empty())
        throw DataError("cannot evaluate on an empty sample set");
    struct Row {
        double loss = 0.0;
        bool correct = false;
        double abs_err = 0.0;
        double pct_err = 0.0;
        bool has_pct = false;
    };
    std::vector<Row> rows(samples.size());
    execute_stage(pool, samples.size(), [&](std::size_t i) {
        const Example& ex = samples[i];
        const ForwardTrace trace = forward(net, ex.input);
        const auto& out = trace.output().values;
        Row& row = rows[i];
        row.loss = loss_eval(net.loss, out, ex.target);
        if (task == Task::Classify) {
            row.correct = argmax(out) == argmax(ex.target);
        } else {
            row.abs_err = std::abs(out[0] - ex.target[0]);
            if (ex.target[0] != 0.0) {
                row.pct_err = row.abs_err / std::abs(ex.target[0]);
                row.has_pct = true;
            }
        }
    });
    Metrics m;
    m.count = samples.size();
    std::size_t correct = 0, pct_count = 0;
    for (const Row& row : rows) {
        m.loss += row.loss;
        m.mae += row.abs_err;
        if (row.has_pct) {
            m.mape += row.pct_err;
            ++pct_count;
        }
        correct += row.correct ? 1 : 0;
    }
    const auto n = static_cast<double>(samples.size());
    m.loss /= n;
    if (task == Task::Classify) {
        m.accuracy = 100.0 * static_cast<double>(correct) / n;
    } else {
        m.mae /= n;
        m.mape = pct_count ? 100.0 * m.mape / static_cast<double>(pct_count) : 0.0;
    }
    return m;
}

// Metric driving early stopping and reported in the history table.
inline double headline_metric(const Metrics& m, Task task)
{
    return task == Task::Classify ? m.accuracy : m.mape;
}

struct Dataset {
    std::vector<Example> examples;
    std::vector<std::size_t> strata;
    // Examples sharing a group (augmented copies of one original) always land
    // in the same fold. Empty means every example is its own group.
    std::vector<std::size_t> groups;

    std::size_t size() const { return examples.size(); }
};

enum class StopReason { Completed, EarlyStop };

struct HistoryRow {
    std::size_t epoch = 0; // global pass counter, 1-based
    std::size_t fold = 0;  // 1-based
    std::size_t pass = 0;  // 1-based within the fold
    double train_loss = 0.0;
    Metrics test;
    Metrics validation;
};

struct TrainHistory {
    Task task = Task::Classify;
    std::vector<HistoryRow> rows;
    std::vector<StopReason> fold_stops;

    std::size_t epochs_run() const { return rows.size(); }

    std::string to_csv() const
    {
        std::string out = "epoch,fold,pass,train_loss,test_metric,validation_metric\n";
        char line[160];
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "%zu,%zu,%zu,%.17g,%.17g,%.17g\n", r.epoch, r.fold, r.pass,
                          r.train_loss, headline_metric(r.test, task), headline_metric(r.validation, task));
            out += line;
        }
        return out;
    }
};

struct TrainResult {
    TrainHistory history;
    FreezeMasks freeze_masks;              // masks in force at the end of training
    std::set<std::size_t> trained_indices; // learn-test indices that entered a batch
};

namespace detail {
inline std::vector<Example> gather(const Dataset& data, std::span<const std::size_t> idx)
{
    std::vector<Example> out;
    out.reserve(idx.size());
    for (std::size_t i : idx)
        out.push_back(data.examples[i]);
    return out;
}

inline FreezeMasks sample_freeze_masks(const Network& net, Resample when, std::uint64_t seed,
                                       std::initializer_list<std::uint64_t> coords, const FreezeMasks& current)
{
    FreezeMasks masks = current.empty() ? FreezeMasks(net.layers.size()) : current;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const RegularizerSpec* fc = net.layers[l].spec.regularizer(RegularizerKind::Freezeconnect);
        if (!fc || fc->resample != when)
            continue;
        std::uint64_t stream = derive_seed(seed, {0xf2ee, l});
        for (std::uint64_t c : coords)
            stream = derive_seed(stream, {c});
        Rng rng(stream);
        masks[l] = sample_mask(net.layers[l].bank, fc->rate, rng);
    }
    return masks;
}

// Folds over groups, expanded back to example indices.
inline FoldSplit group_folds(const Dataset& data, std::span<const std::size_t> members, std::size_t k, Rng& rng)
{
    std::vector<std::size_t> group_ids;
    std::vector<std::size_t> group_strata;
    std::map<std::size_t, std::size_t> slot;
    std::vector<std::vector<std::size_t>> group_members;
    for (std::size_t i : members) {
        const std::size_t g = data.groups.empty() ? i : data.groups[i];
        auto [it, inserted] = slot.try_emplace(g, group_ids.size());
        if (inserted) {
            group_ids.push_back(g);
            group_strata.push_back(data.strata[i]);
            group_members.emplace_back();
        }
        group_members[it->second].push_back(i);
    }
    FoldSplit by_group = stratified_kfold(group_strata, k, rng);
    FoldSplit split;
    split.undersized_strata = by_group.undersized_strata;
    split.folds.resize(k);
    for (std::size_t f = 0; f < k; ++f) {
        for (std::size_t g : by_group.folds[f])
            split.folds[f].insert(split.folds[f].end(), group_members[g].begin(), group_members[g].end());
        std::sort(split.folds[f].begin(), split.folds[f].end());
    }
    return split;
}
} // namespace detail

// Trains net in place. learn_test is split into cv.folds stratified folds;
// for each fold the remaining folds train for up to cv.repeats_per_fold passes.
// Validation data never enters a batch. Optimizer state carries across passes
// and folds. Results are identical for any pool size.
inline TrainResult train(Network& net, const Dataset& learn_test, const Dataset& validation, const CvConfig& cv,
                         const OptimizerConfig& opt, Task task, std::uint64_t seed, WorkerPool* pool = nullptr)
{
    cv.validate();
    opt.validate();
    if (learn_test.size() == 0 || validation.size() == 0)
        throw DataError("training needs non-empty learn-test and validation sets");
    if (learn_test.strata.size() != learn_test.size())
        throw DataError("every learn-test example needs a stratum");
    if (!learn_test.groups.empty() && learn_test.groups.size() != learn_test.size())
        throw DataError("group ids must cover every learn-test example");

    TrainResult result;
    result.history.task = task;
    const bool higher_is_better = task == Task::Classify;

    std::vector<std::size_t> all(learn_test.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng fold_rng = derive_rng(seed, {0xf01d});
    const FoldSplit split = detail::group_folds(learn_test, all, cv.folds, fold_rng);

    OptimizerState state = OptimizerState::zeros_like(net);
    result.freeze_masks = detail::sample_freeze_masks(net, Resample::PerRun, seed, {0}, {});
    std::size_t epoch = 0;

    for (std::size_t fold = 0; fold < cv.folds; ++fold) {
        std::vector<std::size_t> train_idx;
        for (std::size_t f = 0; f < cv.folds; ++f)
            if (f != fold)
                train_idx.insert(train_idx.end(), split.folds[f].begin(), split.folds[f].end());
        std::sort(train_idx.begin(), train_idx.end());
        if (train_idx.empty() || split.folds[fold].empty())
            throw DataError("fold " + std::to_string(fold + 1) + " is empty; too few samples for the fold count");
        const std::vector<Example> test_set = detail::gather(learn_test, split.folds[fold]);

        std::vector<double> val_history;
        StopReason stop = StopReason::Completed;
        for (std::size_t pass = 0; pass < cv.repeats_per_fold; ++pass) {
            ++epoch;
            result.freeze_masks =
                detail::sample_freeze_masks(net, Resample::PerEpoch, seed, {fold, pass}, result.freeze_masks);
            Rng batch_rng = derive_rng(seed, {0xba7c, fold, pass});
            const auto batches = minibatch_iter(train_idx.size(), opt.batch_size, batch_rng);

            double loss_sum = 0.0;
            for (std::size_t b = 0; b < batches.size(); ++b) {
                result.freeze_masks =
                    detail::sample_freeze_masks(net, Resample::PerBatch, seed, {fold, pass, b}, result.freeze_masks);
                const auto& batch = batches[b];
                std::vector<Gradients> grads(batch.size());
                std::vector<double> losses(batch.size());
                execute_stage(pool, batch.size(), [&](std::size_t i) {
                    const Example& ex = learn_test.examples[train_idx[batch[i]]];
                    Rng rng = derive_rng(seed, {0x5a3e, fold, pass, b, i});
                    const ForwardTrace trace = forward(net, ex.input, Mode::Train, rng);
                    losses[i] = loss_eval(net.loss, trace.output().values, ex.target);
                    grads[i] = backward(net, trace, ex.target);
                });
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    if (!std::isfinite(losses[i]))
                        throw DivergenceError("non-finite loss at fold " + std::to_string(fold + 1) + ", pass " +
                                              std::to_string(pass + 1));
                    loss_sum += losses[i];
                    result.trained_indices.insert(train_idx[batch[i]]);
                }
                const Gradients mean = mean_gradient(net, grads);
                if (!mean.all_finite())
                    throw DivergenceError("non-finite gradient at fold " + std::to_string(fold + 1));
                step(net, mean, state, opt, result.freeze_masks);
            }

            HistoryRow row;
            row.epoch = epoch;
            row.fold = fold + 1;
            row.pass = pass + 1;
            row.train_loss = loss_sum / static_cast<double>(train_idx.size());
            row.test = evaluate(net, test_set, task, pool);
            row.validation = evaluate(net, validation.examples, task, pool);
            if (!std::isfinite(row.test.loss) || !std::isfinite(row.validation.loss))
                throw DivergenceError("non-finite evaluation loss at fold " + std::to_string(fold + 1));
            result.history.rows.push_back(row);

            val_history.push_back(headline_metric(row.validation, task));
            if (early_stop_check(val_history, cv.tolerance, higher_is_better)) {
                stop = StopReason::EarlyStop;
                break;
            }
        }
        result.history.fold_stops.push_back(stop);
    }
    return result;
}

} // namespace ignet
