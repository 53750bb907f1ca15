#pragma once

// Mini-batch gradient descent: plain, momentum and Nesterov (NAG).
//
//   plain:    w <- w - lr*g
//   momentum: v <- mu*v - lr*g;  w <- w + v
//   nag:      v <- mu*v - lr*g;  w <- w + mu*v - lr*g
//
// NAG uses the parameter-space reformulation, which tracks the look-ahead
// point and needs no extra forward pass.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "backprop.hpp"
#include "error.hpp"
#include "network.hpp"
#include "random.hpp"
#include "regularize.hpp"

namespace ignet {

enum class OptimizerKind { Plain, Momentum, Nag };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Plain;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;

    void validate() const
    {
        if (!(learning_rate >= 0.0))
            throw ConfigError("learning rate must be non-negative");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw ConfigError("momentum coefficient must lie in [0, 1)");
        if (batch_size == 0)
            throw ConfigError("batch size must be at least 1");
    }
};

struct OptimizerState {
    std::vector<LayerGradient> velocity;

    static OptimizerState zeros_like(const Network& net) { return {Gradients::zeros_like(net).layers}; }
};

// Per network layer; an empty mask freezes nothing.
using FreezeMasks = std::vector<WeightMask>;

inline void step(Network& net, const Gradients& grads, OptimizerState& state, const OptimizerConfig& config,
                 const FreezeMasks& frozen = {})
{
    if (grads.layers.size() != net.layers.size() || state.velocity.size() != net.layers.size())
        throw ShapeError("gradient or optimizer state does not match the network");
    if (!frozen.empty() && frozen.size() != net.layers.size())
        throw ShapeError("freeze masks do not match the network");

    const double lr = config.learning_rate;
    const double mu = config.kind == OptimizerKind::Plain ? 0.0 : config.momentum;

    auto update = [&](double& w, double& v, double g) {
        switch (config.kind) {
        case OptimizerKind::Plain:
            w -= lr * g;
            break;
        case OptimizerKind::Momentum:
            v = mu * v - lr * g;
            w += v;
            break;
        case OptimizerKind::Nag:
            v = mu * v - lr * g;
            w += mu * v - lr * g;
            break;
        }
    };

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Layer& layer = net.layers[l];
        if (!layer.has_parameters())
            continue;
        FilterBank& bank = layer.bank;
        const LayerGradient& g = grads.layers[l];
        LayerGradient& v = state.velocity[l];
        if (g.weights.size() != bank.weights.size() || v.weights.size() != bank.weights.size() ||
            g.biases.size() != bank.biases.size() || v.biases.size() != bank.biases.size())
            throw ShapeError("gradient shape mismatch at layer " + std::to_string(l + 1));
        const WeightMask* mask = frozen.empty() || frozen[l].empty() ? nullptr : &frozen[l];
        if (mask && mask->size() != bank.weights.size())
            throw ShapeError("freeze mask shape mismatch at layer " + std::to_string(l + 1));
        for (std::size_t i = 0; i < bank.weights.size(); ++i) {
            if (mask && (*mask)[i])
                continue;
            update(bank.weights[i], v.weights[i], g.weights[i]);
        }
        if (bank.bias_learning)
            for (std::size_t i = 0; i < bank.biases.size(); ++i)
                update(bank.biases[i], v.biases[i], g.biases[i]);
    }
}

// Shuffled index batches covering [0, count) once; the last batch may be short.
inline std::vector<std::vector<std::size_t>> minibatch_iter(std::size_t count, std::size_t batch_size, Rng& rng)
{
    if (count == 0)
        throw DataError("cannot batch an empty dataset");
    if (batch_size == 0)
        throw ConfigError("batch size must be at least 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = count; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count; start += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + batch_size)));
    return batches;
}

} // namespace ignet
