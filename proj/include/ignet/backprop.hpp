#pragma once

// Gradient computation.
//
// For the last parameterized layer the weight derivative is
//
//     dL/dw_ij = sum over neurons b fed by w_ij of  In_a(b) * N'_b * dL/dN_b
//
// where In_a(b) is the input element w_ij multiplies for neuron b. Inner layers
// replace N'_b * dL/dN_b with the sensitivity propagated back through the next
// layer's weights and activation derivatives. Bias derivatives are the same
// sums without the input factor.
//
// backward() fuses that bookkeeping into the convolution loops. The explicit
// index sets (which inputs each weight touches, which next-layer weights and
// neurons each neuron feeds) are also materialized by build_connectivity() so
// small networks can be checked term by term.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "network.hpp"

namespace ignet {

struct LayerGradient {
    std::vector<double> weights;
    std::vector<double> biases;
};

// One entry per network layer; entries of parameter-free layers stay empty.
struct Gradients {
    std::vector<LayerGradient> layers;

    static Gradients zeros_like(const Network& net)
    {
        Gradients g;
        g.layers.resize(net.layers.size());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            if (!net.layers[l].has_parameters())
                continue;
            g.layers[l].weights.assign(net.layers[l].bank.weights.size(), 0.0);
            g.layers[l].biases.assign(net.layers[l].bank.biases.size(), 0.0);
        }
        return g;
    }

    void add(const Gradients& other)
    {
        if (other.layers.size() != layers.size())
            throw ShapeError("gradient layer counts differ");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto& a = layers[l];
            const auto& b = other.layers[l];
            if (a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size())
                throw ShapeError("gradient shapes differ at layer " + std::to_string(l + 1));
            for (std::size_t i = 0; i < a.weights.size(); ++i)
                a.weights[i] += b.weights[i];
            for (std::size_t i = 0; i < a.biases.size(); ++i)
                a.biases[i] += b.biases[i];
        }
    }

    void scale(double factor)
    {
        for (auto& l : layers) {
            for (auto& v : l.weights)
                v *= factor;
            for (auto& v : l.biases)
                v *= factor;
        }
    }

    bool all_finite() const
    {
        for (const auto& l : layers) {
            for (double v : l.weights)
                if (!std::isfinite(v))
                    return false;
            for (double v : l.biases)
                if (!std::isfinite(v))
                    return false;
        }
        return true;
    }
};

// Mean of per-sample gradients, summed in index order.
inline Gradients mean_gradient(const Network& net, std::span<const Gradients> per_sample)
{
    Gradients total = Gradients::zeros_like(net);
    for (const auto& g : per_sample)
        total.add(g);
    if (!per_sample.empty())
        total.scale(1.0 / static_cast<double>(per_sample.size()));
    return total;
}

// Gradients of the loss of one traced sample. When pre_sensitivity is given it
// receives, per layer, dL/d(pre-activation) (the full derivative with respect
// to each neuron's bias); entries of parameter-free layers stay empty.
inline Gradients backward(const Network& net, const ForwardTrace& trace, std::span<const double> target,
                          std::vector<FeatureMap>* pre_sensitivity = nullptr)
{
    if (trace.layers.size() != net.layers.size())
        throw ShapeError("trace has " + std::to_string(trace.layers.size()) + " layers, network has " +
                         std::to_string(net.layers.size()));
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        if (trace.layers[l].post.shape != net.layers[l].output_shape)
            throw ShapeError("trace does not match network at layer " + std::to_string(l + 1));

    Gradients grads = Gradients::zeros_like(net);
    if (pre_sensitivity) {
        pre_sensitivity->clear();
        pre_sensitivity->resize(net.layers.size());
    }

    std::vector<double> delta = loss_output_gradient(net, trace, target);
    const std::size_t top = net.ends_with_softmax() ? net.layers.size() - 1 : net.layers.size();

    for (std::size_t l = top; l-- > 0;) {
        const Layer& layer = net.layers[l];
        const LayerTrace& t = trace.layers[l];
        if (!t.dropout_scale.empty())
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta[i] *= t.dropout_scale[i];

        FeatureMap delta_in(t.input.shape);
        switch (layer.spec.kind) {
        case LayerKind::Conv:
        case LayerKind::Dense: {
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta[i] *= activation_eval(layer.spec.activation, t.pre.values[i]).derivative;
            if (pre_sensitivity)
                (*pre_sensitivity)[l] = FeatureMap(t.pre.shape, delta);

            const FilterBank& bank = layer.bank;
            const bool masked = !t.dropconnect.empty();
            LayerGradient& g = grads.layers[l];
            const Shape3& out = layer.output_shape;
            const auto pad_v = static_cast<std::ptrdiff_t>(layer.geometry.pad_v());
            const auto pad_h = static_cast<std::ptrdiff_t>(layer.geometry.pad_h());
            const auto in_rows = static_cast<std::ptrdiff_t>(t.input.shape.rows);
            const auto in_cols = static_cast<std::ptrdiff_t>(t.input.shape.cols);
            const bool need_input_delta = l > 0;

            for (std::size_t o = 0; o < out.channels; ++o) {
                for (std::size_t r = 0; r < out.rows; ++r) {
                    for (std::size_t c = 0; c < out.cols; ++c) {
                        const double d = delta[(o * out.rows + r) * out.cols + c];
                        g.biases[o] += d;
                        if (d == 0.0)
                            continue;
                        const auto top_row = static_cast<std::ptrdiff_t>(r * layer.geometry.stride_v) - pad_v;
                        const auto left = static_cast<std::ptrdiff_t>(c * layer.geometry.stride_h) - pad_h;
                        for (std::size_t i = 0; i < bank.in_channels; ++i) {
                            for (std::size_t p = 0; p < bank.v; ++p) {
                                const std::ptrdiff_t y = top_row + static_cast<std::ptrdiff_t>(p);
                                if (y < 0 || y >= in_rows)
                                    continue;
                                for (std::size_t q = 0; q < bank.h; ++q) {
                                    const std::ptrdiff_t x = left + static_cast<std::ptrdiff_t>(q);
                                    if (x < 0 || x >= in_cols)
                                        continue;
                                    const std::size_t w = bank.index(o, i, p, q);
                                    const std::size_t a = t.input.index(i, static_cast<std::size_t>(y),
                                                                        static_cast<std::size_t>(x));
                                    g.weights[w] += d * t.input.values[a];
                                    if (need_input_delta && !(masked && t.dropconnect[w]))
                                        delta_in.values[a] += bank.weights[w] * d;
                                }
                            }
                        }
                    }
                }
            }
            if (masked)
                for (std::size_t w = 0; w < g.weights.size(); ++w)
                    if (t.dropconnect[w])
                        g.weights[w] = 0.0;
            break;
        }
        case LayerKind::MaxPool:
            for (std::size_t k = 0; k < delta.size(); ++k)
                delta_in.values[t.provenance[k]] += delta[k];
            break;
        case LayerKind::Softmax:
            throw ShapeError("softmax is only supported as the last layer");
        }
        delta = std::move(delta_in.values);
    }
    return grads;
}

// A (first, second) index pair; the meaning depends on the table holding it.
struct Link {
    std::size_t first = 0;
    std::size_t second = 0;
    bool operator==(const Link&) const = default;
};

// Index sets of one parameterized layer.
struct LayerConnectivity {
    std::size_t layer = 0; // index into Network::layers
    // Per weight: (output neuron, input element) pairs the weight links.
    std::vector<std::vector<Link>> weight_links;
    // Per output neuron: (next-layer weight, next-layer neuron) pairs it feeds.
    std::vector<std::vector<Link>> downstream;
};

struct ConnectivityMap {
    std::vector<LayerConnectivity> layers;
};

namespace detail {
inline bool plain_chain(const Network& net)
{
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const LayerKind k = net.layers[l].spec.kind;
        if (k == LayerKind::MaxPool)
            return false;
        if (k == LayerKind::Softmax && l + 1 != net.layers.size())
            return false;
    }
    return true;
}
} // namespace detail

// Materializes the index sets for a chain of conv/dense layers (optionally
// ending in softmax). Padding positions contribute nothing and are omitted.
inline ConnectivityMap build_connectivity(const Network& net)
{
    if (!detail::plain_chain(net))
        throw ConfigError("connectivity tables need a chain of conv/dense layers");
    ConnectivityMap map;
    for (std::size_t l : net.parameterized_layers()) {
        const Layer& layer = net.layers[l];
        const FilterBank& bank = layer.bank;
        const Shape3& in = layer.input_shape;
        const Shape3& out = layer.output_shape;
        LayerConnectivity lc;
        lc.layer = l;
        lc.weight_links.resize(bank.weight_count());
        lc.downstream.resize(out.size());
        for (std::size_t o = 0; o < out.channels; ++o)
            for (std::size_t r = 0; r < out.rows; ++r)
                for (std::size_t c = 0; c < out.cols; ++c) {
                    const std::size_t beta = (o * out.rows + r) * out.cols + c;
                    for (std::size_t i = 0; i < bank.in_channels; ++i)
                        for (std::size_t p = 0; p < bank.v; ++p)
                            for (std::size_t q = 0; q < bank.h; ++q) {
                                const auto y = static_cast<std::ptrdiff_t>(r * layer.geometry.stride_v + p) -
                                               static_cast<std::ptrdiff_t>(layer.geometry.pad_v());
                                const auto x = static_cast<std::ptrdiff_t>(c * layer.geometry.stride_h + q) -
                                               static_cast<std::ptrdiff_t>(layer.geometry.pad_h());
                                if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(in.rows) ||
                                    x >= static_cast<std::ptrdiff_t>(in.cols))
                                    continue;
                                const std::size_t alpha =
                                    (i * in.rows + static_cast<std::size_t>(y)) * in.cols + static_cast<std::size_t>(x);
                                lc.weight_links[bank.index(o, i, p, q)].push_back({beta, alpha});
                            }
                }
        if (!map.layers.empty()) {
            // This layer's inputs are the previous layer's neurons.
            auto& prev = map.layers.back();
            for (std::size_t gamma = 0; gamma < lc.weight_links.size(); ++gamma)
                for (const Link& link : lc.weight_links[gamma])
                    prev.downstream[link.second].push_back({gamma, link.first});
        }
        map.layers.push_back(std::move(lc));
    }
    return map;
}

// Gradients summed term by term over the explicit index sets. Inference traces
// only (no dropout/dropconnect).
inline Gradients explicit_sum_gradient(const Network& net, const ForwardTrace& trace,
                                       std::span<const double> target, const ConnectivityMap& map)
{
    if (map.layers.empty())
        throw ConfigError("empty connectivity map");
    Gradients grads = Gradients::zeros_like(net);
    const std::vector<double> loss_grad = loss_output_gradient(net, trace, target);

    std::vector<double> sens; // N'_b * dL/dN_b for the current layer
    for (std::size_t k = map.layers.size(); k-- > 0;) {
        const LayerConnectivity& lc = map.layers[k];
        const Layer& layer = net.layers[lc.layer];
        const LayerTrace& t = trace.layers[lc.layer];
        std::vector<double> next_sens(t.pre.size(), 0.0);
        for (std::size_t beta = 0; beta < t.pre.size(); ++beta) {
            const double n_prime = activation_eval(layer.spec.activation, t.pre.values[beta]).derivative;
            if (k + 1 == map.layers.size()) {
                next_sens[beta] = n_prime * loss_grad[beta];
            } else {
                const FilterBank& up = net.layers[map.layers[k + 1].layer].bank;
                double sum = 0.0;
                for (const Link& link : lc.downstream[beta])
                    sum += up.weights[link.first] * sens[link.second];
                next_sens[beta] = n_prime * sum;
            }
        }
        sens = std::move(next_sens);

        LayerGradient& g = grads.layers[lc.layer];
        for (std::size_t w = 0; w < lc.weight_links.size(); ++w)
            for (const Link& link : lc.weight_links[w])
                g.weights[w] += t.input.values[link.second] * sens[link.first];
        const std::size_t per_channel = layer.output_shape.rows * layer.output_shape.cols;
        for (std::size_t beta = 0; beta < sens.size(); ++beta)
            g.biases[beta / per_channel] += sens[beta];
    }
    return grads;
}

// Central differences (L(p+eps) - L(p-eps)) / 2eps for every weight and bias,
// with inference-mode forwards.
inline Gradients finite_diff_gradient(const Network& net, const FeatureMap& input, std::span<const double> target,
                                      double epsilon)
{
    if (!(epsilon > 0.0))
        throw ConfigError("finite difference step must be positive");
    Network probe = net;
    Gradients grads = Gradients::zeros_like(net);
    auto central = [&](double& param) {
        const double original = param;
        param = original + epsilon;
        const double up = sample_loss(probe, input, target);
        param = original - epsilon;
        const double down = sample_loss(probe, input, target);
        param = original;
        return (up - down) / (2.0 * epsilon);
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        if (!probe.layers[l].has_parameters())
            continue;
        FilterBank& bank = probe.layers[l].bank;
        for (std::size_t i = 0; i < bank.weights.size(); ++i)
            grads.layers[l].weights[i] = central(bank.weights[i]);
        for (std::size_t i = 0; i < bank.biases.size(); ++i)
            grads.layers[l].biases[i] = central(bank.biases[i]);
    }
    return grads;
}

inline double relative_error(double a, double b)
{
    return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

struct GradientCheckReport {
    bool passed = true;
    double max_relative_error = 0.0;
    std::size_t worst_layer = 0; // index into Network::layers
    std::size_t worst_index = 0;
    bool worst_is_bias = false;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t parameters_checked = 0;
};

using BackwardFn = std::function<Gradients(const Network&, const ForwardTrace&, std::span<const double>)>;

inline Gradients default_backward(const Network& net, const ForwardTrace& trace, std::span<const double> target)
{
    return backward(net, trace, target);
}

// Compares a backward implementation against central differences per sample.
inline GradientCheckReport gradient_check(const Network& net, std::span<const Example> samples, double epsilon,
                                          double tolerance, const BackwardFn& backward_fn = default_backward)
{
    if (!(tolerance > 0.0))
        throw ConfigError("gradient check tolerance must be positive");
    GradientCheckReport report;
    for (const Example& s : samples) {
        const ForwardTrace trace = forward(net, s.input);
        const Gradients analytic = backward_fn(net, trace, s.target);
        const Gradients numeric = finite_diff_gradient(net, s.input, s.target, epsilon);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto visit = [&](const std::vector<double>& a, const std::vector<double>& b, bool bias) {
                for (std::size_t i = 0; i < a.size(); ++i) {
                    ++report.parameters_checked;
                    const double err = relative_error(a[i], b[i]);
                    if (err > report.max_relative_error || !std::isfinite(err)) {
                        report.max_relative_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
                        report.worst_layer = l;
                        report.worst_index = i;
                        report.worst_is_bias = bias;
                        report.worst_analytic = a[i];
                        report.worst_numeric = b[i];
                    }
                }
            };
            visit(analytic.layers.at(l).weights, numeric.layers[l].weights, false);
            visit(analytic.layers.at(l).biases, numeric.layers[l].biases, true);
        }
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

} // namespace ignet
