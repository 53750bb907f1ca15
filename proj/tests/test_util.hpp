#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "ignet/network.hpp"
#include "ignet/random.hpp"
#include "ignet/tensor.hpp"

namespace ignet::testing {

inline FeatureMap random_map(Shape3 shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    FeatureMap m(shape);
    for (auto& v : m.values)
        v = uniform(rng, lo, hi);
    return m;
}

inline FilterBank random_bank(std::size_t out, std::size_t in, std::size_t v, std::size_t h, Rng& rng,
                              bool zero_bias = false)
{
    FilterBank b(out, in, v, h);
    for (auto& w : b.weights)
        w = uniform(rng, -1.0, 1.0);
    if (!zero_bias)
        for (auto& x : b.biases)
            x = uniform(rng, -1.0, 1.0);
    return b;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline void randomize(Network& net, Rng& rng, double scale = 1.0)
{
    for (auto& layer : net.layers) {
        if (!layer.has_parameters())
            continue;
        const double fan = static_cast<double>(layer.bank.in_channels * layer.bank.v * layer.bank.h);
        const double limit = scale * std::sqrt(3.0 / fan);
        for (auto& w : layer.bank.weights)
            w = uniform(rng, -limit, limit);
        for (auto& b : layer.bank.biases)
            b = uniform(rng, -0.2, 0.2);
    }
}

struct OracleCase {
    Network net;
    Example sample;
};

// True when the trace sits at least margin away from every point where the
// loss is not differentiable: relu kinks, max-pool ties, MAE zero residuals.
inline bool off_kinks(const Network& net, const ForwardTrace& t, std::span<const double> target, double margin)
{
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        if (layer.has_parameters() && layer.spec.activation == Activation::Relu)
            for (double v : t.layers[l].pre.values)
                if (std::abs(v) < margin)
                    return false;
        if (layer.spec.kind == LayerKind::MaxPool) {
            const PoolWindow& w = layer.spec.pool;
            const FeatureMap& in = t.layers[l].input;
            const Shape3& out = layer.output_shape;
            for (std::size_t c = 0; c < out.channels; ++c)
                for (std::size_t r = 0; r < out.rows; ++r)
                    for (std::size_t k = 0; k < out.cols; ++k) {
                        const double top = t.layers[l].pre.at(c, r, k);
                        int at_top = 0;
                        for (std::size_t p = 0; p < w.window_v; ++p)
                            for (std::size_t q = 0; q < w.window_h; ++q) {
                                const double v = in.at(c, r * w.stride_v + p, k * w.stride_h + q);
                                if (v == top)
                                    ++at_top;
                                else if (top - v < margin)
                                    return false;
                            }
                        if (at_top > 1)
                            return false;
                    }
        }
    }
    if (net.loss == Loss::MAE) {
        const auto& out = t.output().values;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (std::abs(out[i] - target[i]) < margin)
                return false;
    }
    return true;
}

inline Activation random_activation(Rng& rng)
{
    return static_cast<Activation>(pick(rng, 0, 3));
}

// A random chain drawn from conv, max-pool, dense and softmax layers with
// every activation and loss, plus one sample on which it is differentiable.
inline OracleCase random_oracle_case(Rng& rng, double margin = 1e-3)
{
    for (;;) {
        const Shape3 in{pick(rng, 1, 2), pick(rng, 6, 9), pick(rng, 6, 9)};
        std::vector<LayerSpec> specs;
        ConvGeometry g;
        g.stride_v = pick(rng, 1, 2);
        g.stride_h = pick(rng, 1, 2);
        g.zero_pad_v = pick(rng, 0, 1);
        g.zero_pad_h = pick(rng, 0, 1);
        specs.push_back(LayerSpec::conv(pick(rng, 1, 3), pick(rng, 2, 3), pick(rng, 2, 3), random_activation(rng), g));
        if (pick(rng, 0, 1))
            specs.push_back(LayerSpec::max_pool({2, 2, pick(rng, 1, 2), pick(rng, 1, 2)}));
        if (pick(rng, 0, 1))
            specs.push_back(LayerSpec::conv(pick(rng, 1, 3), 2, 2, random_activation(rng)));
        if (pick(rng, 0, 1))
            specs.push_back(LayerSpec::dense(pick(rng, 2, 5), random_activation(rng)));
        const std::size_t outputs = pick(rng, 1, 4);
        specs.push_back(LayerSpec::dense(outputs, random_activation(rng)));

        const std::size_t loss_pick = pick(rng, 0, 3);
        Loss loss = Loss::MSE;
        if (loss_pick == 0 || loss_pick == 1) {
            if (outputs < 2)
                continue;
            specs.push_back(LayerSpec::softmax());
            loss = loss_pick == 0 ? Loss::CrossEntropy : Loss::MSE;
        } else {
            loss = loss_pick == 2 ? Loss::MSE : Loss::MAE;
        }

        Network net;
        try {
            net = build_network(specs, loss, in);
        } catch (const ShapeError&) {
            continue;
        }
        randomize(net, rng, 1.5);
        Example ex{random_map(in, rng, 0.0, 1.0), std::vector<double>(outputs, 0.0)};
        if (loss == Loss::CrossEntropy)
            ex.target[pick(rng, 0, outputs - 1)] = 1.0;
        else
            for (auto& t : ex.target)
                t = uniform(rng, -1.0, 1.0);
        if (!off_kinks(net, forward(net, ex.input), ex.target, margin))
            continue;
        return {std::move(net), std::move(ex)};
    }
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

} // namespace ignet::testing
