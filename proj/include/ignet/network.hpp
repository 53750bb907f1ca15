#pragma once

// Layer chains, activations, losses and the forward pass.
//
// A dense layer is a convolution whose filter covers its whole input, so every
// parameterized layer is backed by a FilterBank and handled by one code path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "regularize.hpp"
#include "tensor.hpp"

namespace ignet {

enum class Activation { Identity, Relu, Sigmoid, BipolarSigmoid };

struct ActivationValue {
    double value = 0.0;
    double derivative = 0.0;
};

inline ActivationValue activation_eval(Activation a, double x)
{
    switch (a) {
    case Activation::Identity:
        return {x, 1.0};
    case Activation::Relu:
        // The kink at 0 takes derivative 0.
        return x > 0.0 ? ActivationValue{x, 1.0} : ActivationValue{0.0, 0.0};
    case Activation::Sigmoid: {
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        return {s, s * (1.0 - s)};
    }
    case Activation::BipolarSigmoid: {
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        const double value = 2.0 * s - 1.0;
        return {value, (1.0 - value * value) / 2.0};
    }
    }
    return {x, 1.0};
}

enum class Loss { MSE, MAE, CrossEntropy };

inline constexpr double kProbabilityFloor = 1e-12;

enum class LayerKind { Conv, MaxPool, Dense, Softmax };

inline const char* to_string(LayerKind k)
{
    switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Dense: return "dense";
    case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::size_t outputs = 0; // filters for conv, neurons for dense
    std::size_t filter_v = 0;
    std::size_t filter_h = 0;
    ConvGeometry geometry;
    PoolWindow pool;
    Activation activation = Activation::Identity;
    bool bias_learning = false;
    std::vector<RegularizerSpec> regularizers;

    static LayerSpec conv(std::size_t filters, std::size_t v, std::size_t h,
                          Activation act = Activation::Identity, ConvGeometry geom = {})
    {
        LayerSpec s;
        s.kind = LayerKind::Conv;
        s.outputs = filters;
        s.filter_v = v;
        s.filter_h = h;
        s.geometry = geom;
        s.activation = act;
        return s;
    }
    static LayerSpec dense(std::size_t outputs, Activation act = Activation::Identity)
    {
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.outputs = outputs;
        s.activation = act;
        return s;
    }
    static LayerSpec max_pool(PoolWindow window = {})
    {
        LayerSpec s;
        s.kind = LayerKind::MaxPool;
        s.pool = window;
        return s;
    }
    static LayerSpec softmax()
    {
        LayerSpec s;
        s.kind = LayerKind::Softmax;
        return s;
    }

    LayerSpec& with(RegularizerSpec r)
    {
        regularizers.push_back(r);
        return *this;
    }
    LayerSpec& learn_biases(bool on = true)
    {
        bias_learning = on;
        return *this;
    }

    const RegularizerSpec* regularizer(RegularizerKind k) const
    {
        for (const auto& r : regularizers)
            if (r.kind == k)
                return &r;
        return nullptr;
    }
};

struct Layer {
    LayerSpec spec;
    Shape3 input_shape;
    Shape3 output_shape;
    FilterBank bank;     // empty unless has_parameters()
    ConvGeometry geometry;

    bool has_parameters() const { return spec.kind == LayerKind::Conv || spec.kind == LayerKind::Dense; }
};

struct Network {
    Shape3 input_shape;
    Loss loss = Loss::MSE;
    std::vector<Layer> layers;

    Shape3 output_shape() const { return layers.back().output_shape; }

    // Indices into layers of the conv/dense layers, in order.
    std::vector<std::size_t> parameterized_layers() const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].has_parameters())
                out.push_back(i);
        return out;
    }

    bool ends_with_softmax() const { return layers.back().spec.kind == LayerKind::Softmax; }
};

inline Network build_network(const std::vector<LayerSpec>& specs, Loss loss, Shape3 input_shape)
{
    if (specs.empty())
        throw ConfigError("network needs at least one layer");
    if (input_shape.size() == 0)
        throw ShapeError("network input shape " + to_string(input_shape) + " is empty");

    Network net;
    net.input_shape = input_shape;
    net.loss = loss;
    Shape3 shape = input_shape;
    for (std::size_t n = 0; n < specs.size(); ++n) {
        const LayerSpec& spec = specs[n];
        const std::string where = "layer " + std::to_string(n + 1) + " (" + to_string(spec.kind) + ")";
        if (spec.kind == LayerKind::Softmax && n + 1 != specs.size())
            throw ConfigError(where + ": softmax must be the last layer");
        for (const auto& r : spec.regularizers) {
            validate_rate(r.rate);
            const bool weight_policy = r.kind != RegularizerKind::Dropout;
            if (weight_policy && spec.kind != LayerKind::Conv && spec.kind != LayerKind::Dense)
                throw ConfigError(where + ": weight regularizers need a conv or dense layer");
            if (r.kind == RegularizerKind::Dropout && (spec.kind == LayerKind::Softmax || r.rate >= 1.0))
                throw ConfigError(where + ": dropout needs a non-softmax layer and rate below 1");
        }

        Layer layer;
        layer.spec = spec;
        layer.input_shape = shape;
        try {
            switch (spec.kind) {
            case LayerKind::Conv:
                if (spec.outputs == 0)
                    throw GeometryError("conv layer needs at least one filter");
                layer.bank = FilterBank(spec.outputs, shape.channels, spec.filter_v, spec.filter_h);
                layer.geometry = spec.geometry;
                break;
            case LayerKind::Dense:
                if (spec.outputs == 0)
                    throw GeometryError("dense layer needs at least one output");
                layer.bank = FilterBank(spec.outputs, shape.channels, shape.rows, shape.cols);
                layer.geometry = ConvGeometry{};
                break;
            case LayerKind::MaxPool:
            case LayerKind::Softmax:
                break;
            }
            if (layer.has_parameters()) {
                layer.bank.bias_learning = spec.bias_learning;
                layer.output_shape = output_shape(shape, layer.bank, layer.geometry);
            } else if (spec.kind == LayerKind::MaxPool) {
                layer.output_shape = output_shape(shape, spec.pool);
            } else {
                layer.output_shape = shape;
            }
        } catch (const GeometryError& e) {
            throw ShapeError(where + ": " + e.what() + " (input " + to_string(shape) + ")");
        }
        shape = layer.output_shape;
        net.layers.push_back(std::move(layer));
    }

    if (loss == Loss::CrossEntropy && !net.ends_with_softmax())
        throw ConfigError("cross-entropy loss requires a softmax last layer");
    return net;
}

inline std::vector<double> softmax(std::span<const double> x)
{
    std::vector<double> out(x.size());
    if (x.empty())
        return out;
    const double peak = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - peak);
        total += out[i];
    }
    for (auto& v : out)
        v /= total;
    return out;
}

struct LayerTrace {
    FeatureMap input;
    FeatureMap pre;  // convolution/pool output before activation
    FeatureMap post; // after activation and dropout
    std::vector<std::size_t> provenance;
    std::vector<double> dropout_scale; // empty when no dropout applied
    WeightMask dropconnect;            // empty when no dropconnect applied
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;

    const FeatureMap& output() const { return layers.back().post; }
};

// Runs the chain on input. In Train mode dropout and dropconnect masks are drawn
// from rng and recorded; in Inference mode none apply and rng is untouched.
inline ForwardTrace forward(const Network& net, const FeatureMap& input, Mode mode, Rng& rng,
                            WorkerPool* pool = nullptr)
{
    if (input.shape != net.input_shape)
        throw ShapeError("input " + to_string(input.shape) + " does not match network input " +
                         to_string(net.input_shape));
    ForwardTrace trace;
    trace.layers.reserve(net.layers.size());
    const FeatureMap* current = &input;
    for (const Layer& layer : net.layers) {
        LayerTrace t;
        t.input = *current;
        switch (layer.spec.kind) {
        case LayerKind::Conv:
        case LayerKind::Dense: {
            const RegularizerSpec* dc = layer.spec.regularizer(RegularizerKind::Dropconnect);
            if (mode == Mode::Train && dc && dc->rate > 0.0) {
                t.dropconnect = sample_mask(layer.bank, dc->rate, rng);
                t.pre = convolve(t.input, apply_dropconnect(layer.bank, t.dropconnect), layer.geometry, pool);
            } else {
                t.pre = convolve(t.input, layer.bank, layer.geometry, pool);
            }
            t.post = t.pre;
            for (auto& v : t.post.values)
                v = activation_eval(layer.spec.activation, v).value;
            break;
        }
        case LayerKind::MaxPool: {
            PoolResult pooled = max_pool(t.input, layer.spec.pool);
            t.pre = std::move(pooled.output);
            t.provenance = std::move(pooled.provenance);
            t.post = t.pre;
            break;
        }
        case LayerKind::Softmax:
            t.pre = t.input;
            t.post = FeatureMap(t.input.shape, softmax(t.input.values));
            break;
        }
        const RegularizerSpec* dropout = layer.spec.regularizer(RegularizerKind::Dropout);
        if (mode == Mode::Train && dropout && dropout->rate > 0.0) {
            t.dropout_scale = sample_dropout_scale(t.post.size(), dropout->rate, rng);
            for (std::size_t i = 0; i < t.post.size(); ++i)
                t.post.values[i] *= t.dropout_scale[i];
        }
        trace.layers.push_back(std::move(t));
        current = &trace.layers.back().post;
    }
    return trace;
}

inline ForwardTrace forward(const Network& net, const FeatureMap& input)
{
    Rng unused(0);
    return forward(net, input, Mode::Inference, unused);
}

inline void check_lengths(std::size_t output, std::size_t target)
{
    if (output != target)
        throw ShapeError("output has " + std::to_string(output) + " values, target has " + std::to_string(target));
}

inline double loss_eval(Loss loss, std::span<const double> output, std::span<const double> target)
{
    check_lengths(output.size(), target.size());
    const auto k = static_cast<double>(output.size());
    double total = 0.0;
    switch (loss) {
    case Loss::MSE:
        for (std::size_t i = 0; i < output.size(); ++i)
            total += (output[i] - target[i]) * (output[i] - target[i]);
        return total / k;
    case Loss::MAE:
        for (std::size_t i = 0; i < output.size(); ++i)
            total += std::abs(output[i] - target[i]);
        return total / k;
    case Loss::CrossEntropy:
        for (std::size_t i = 0; i < output.size(); ++i)
            if (target[i] != 0.0)
                total -= target[i] * std::log(std::max(output[i], kProbabilityFloor));
        return total;
    }
    return total;
}

// dLoss/dOutput for the raw network output.
inline std::vector<double> loss_gradient(Loss loss, std::span<const double> output, std::span<const double> target)
{
    check_lengths(output.size(), target.size());
    const auto k = static_cast<double>(output.size());
    std::vector<double> g(output.size(), 0.0);
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double diff = output[i] - target[i];
        switch (loss) {
        case Loss::MSE:
            g[i] = 2.0 * diff / k;
            break;
        case Loss::MAE:
            g[i] = diff > 0.0 ? 1.0 / k : (diff < 0.0 ? -1.0 / k : 0.0);
            break;
        case Loss::CrossEntropy:
            g[i] = output[i] > kProbabilityFloor ? -target[i] / output[i] : 0.0;
            break;
        }
    }
    return g;
}

// dLoss/dN for the neurons feeding the loss: the last layer's output, or the
// softmax input when the chain ends in softmax. Softmax with cross-entropy
// collapses to s - t.
inline std::vector<double> loss_output_gradient(const Network& net, const ForwardTrace& trace,
                                                std::span<const double> target)
{
    if (trace.layers.size() != net.layers.size())
        throw ShapeError("trace does not belong to this network");
    const std::vector<double>& out = trace.output().values;
    check_lengths(out.size(), target.size());
    if (!net.ends_with_softmax())
        return loss_gradient(net.loss, out, target);

    std::vector<double> g(out.size());
    if (net.loss == Loss::CrossEntropy) {
        for (std::size_t i = 0; i < out.size(); ++i)
            g[i] = out[i] - target[i];
        return g;
    }
    const std::vector<double> upstream = loss_gradient(net.loss, out, target);
    double dot = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j)
        dot += out[j] * upstream[j];
    for (std::size_t i = 0; i < out.size(); ++i)
        g[i] = out[i] * (upstream[i] - dot);
    return g;
}

struct Example {
    FeatureMap input;
    std::vector<double> target;
};

inline double sample_loss(const Network& net, const FeatureMap& input, std::span<const double> target)
{
    const ForwardTrace trace = forward(net, input);
    return loss_eval(net.loss, trace.output().values, target);
}

// Shallow preset: one convolution, one dense layer, softmax when classifying.
inline std::vector<LayerSpec> shallow_preset(std::size_t outputs, bool classify, std::size_t filters = 4,
                                             std::size_t filter = 5)
{
    std::vector<LayerSpec> specs{LayerSpec::conv(filters, filter, filter), LayerSpec::dense(outputs)};
    if (classify)
        specs.push_back(LayerSpec::softmax());
    return specs;
}

// Seven-layer preset with optional freezeconnect on the inner convolutions.
inline std::vector<LayerSpec> deep_preset(std::size_t outputs, bool classify, double freeze_rate = 0.0)
{
    std::vector<LayerSpec> specs{
        LayerSpec::conv(4, 3, 3),  LayerSpec::conv(4, 3, 3), LayerSpec::max_pool({2, 2, 2, 2}),
        LayerSpec::conv(8, 3, 3),  LayerSpec::conv(8, 3, 3), LayerSpec::dense(16),
        LayerSpec::dense(outputs),
    };
    if (freeze_rate > 0.0)
        for (std::size_t i : {1u, 3u, 4u})
            specs[i].with(RegularizerSpec::freezeconnect(freeze_rate));
    if (classify)
        specs.push_back(LayerSpec::softmax());
    return specs;
}

} // namespace ignet
