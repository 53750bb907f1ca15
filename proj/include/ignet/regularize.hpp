#pragma once

// Dropout, dropconnect and freezeconnect.
//
// Dropconnect removes a sampled subset of weights from both the forward pass
// and learning. Freezeconnect only removes them from learning: frozen weights
// still take part in every convolution, and their gradients are still
// computed, but the optimizer never moves them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace ignet {

enum class RegularizerKind { Dropout, Dropconnect, Freezeconnect };

// When freezeconnect draws a fresh mask.
enum class Resample { PerRun, PerEpoch, PerBatch };

struct RegularizerSpec {
    RegularizerKind kind = RegularizerKind::Dropout;
    double rate = 0.0;
    Resample resample = Resample::PerRun;

    static RegularizerSpec dropout(double rate) { return {RegularizerKind::Dropout, rate, Resample::PerRun}; }
    static RegularizerSpec dropconnect(double rate) { return {RegularizerKind::Dropconnect, rate, Resample::PerRun}; }
    static RegularizerSpec freezeconnect(double rate, Resample resample = Resample::PerRun)
    {
        return {RegularizerKind::Freezeconnect, rate, resample};
    }
};

inline void validate_rate(double rate)
{
    if (!(rate >= 0.0 && rate <= 1.0))
        throw ConfigError("regularizer rate " + std::to_string(rate) + " outside [0, 1]");
}

// One flag per weight; true means selected by the policy.
struct WeightMask {
    std::vector<std::uint8_t> selected;

    WeightMask() = default;
    explicit WeightMask(std::size_t count) : selected(count, 0) {}

    std::size_t size() const { return selected.size(); }
    bool empty() const { return selected.empty(); }
    bool operator[](std::size_t i) const { return selected[i] != 0; }
    std::size_t count() const { return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), 1)); }
    bool operator==(const WeightMask&) const = default;
};

// Exactly round(rate * count) weights, uniformly without replacement.
inline WeightMask sample_mask(std::size_t count, double rate, Rng& rng)
{
    validate_rate(rate);
    WeightMask mask(count);
    const auto chosen = static_cast<std::size_t>(std::llround(rate * static_cast<double>(count)));
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `chosen` slots end up a uniform subset.
    for (std::size_t i = 0; i < chosen; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, count - 1);
        std::swap(order[i], order[pick(rng)]);
        mask.selected[order[i]] = 1;
    }
    return mask;
}

inline WeightMask sample_mask(const FilterBank& bank, double rate, Rng& rng)
{
    return sample_mask(bank.weight_count(), rate, rng);
}

enum class Mode { Train, Inference };

// Per-neuron multiplier: 0 for dropped neurons, 1/(1-rate) for survivors.
inline std::vector<double> sample_dropout_scale(std::size_t count, double rate, Rng& rng)
{
    validate_rate(rate);
    if (rate >= 1.0)
        throw ConfigError("dropout rate 1 would silence the whole layer");
    std::vector<double> scale(count, 1.0);
    if (rate == 0.0)
        return scale;
    std::bernoulli_distribution drop(rate);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& s : scale)
        s = drop(rng) ? 0.0 : keep_scale;
    return scale;
}

// Inverted dropout: inference mode is the identity.
inline FeatureMap apply_dropout(const FeatureMap& map, double rate, Rng& rng, Mode mode)
{
    validate_rate(rate);
    if (rate >= 1.0)
        throw ConfigError("dropout rate 1 would silence the whole layer");
    if (mode == Mode::Inference || rate == 0.0)
        return map;
    const std::vector<double> scale = sample_dropout_scale(map.size(), rate, rng);
    FeatureMap out = map;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] *= scale[i];
    return out;
}

// Copy of bank with the masked weights set to zero.
inline FilterBank apply_dropconnect(const FilterBank& bank, const WeightMask& mask)
{
    if (mask.size() != bank.weight_count())
        throw ShapeError("dropconnect mask has " + std::to_string(mask.size()) + " entries, bank has " +
                         std::to_string(bank.weight_count()) + " weights");
    FilterBank out = bank;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i])
            out.weights[i] = 0.0;
    return out;
}

// Marks weights the optimizer must not update. The bank is left untouched.
struct FreezeAnnotation {
    WeightMask frozen;
};

inline FreezeAnnotation apply_freezeconnect(const FilterBank& bank, const WeightMask& mask)
{
    if (mask.size() != bank.weight_count())
        throw ShapeError("freezeconnect mask has " + std::to_string(mask.size()) + " entries, bank has " +
                         std::to_string(bank.weight_count()) + " weights");
    return {mask};
}

} // namespace ignet
