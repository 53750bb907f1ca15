#pragma once

// Amplitude-controlled initialization, the analytic bounds it implies, and the
// mean-absolute-value (MAV) report used to steer the amplitudes.
//
// Layer n of the parameterized layers draws weights uniformly from
// [-W_n/(v_n h_n), W_n/(v_n h_n)] and biases from [-B_n, B_n]. With identity
// activations and inputs in [0, 1] this gives
//
//     |In_n| <= prod_{k<n} (B_k + W_k)
//     |dL/dw|_last <= max|dL/dN| * prod_{k<last} (B_k + W_k)
//     |dL/dw|_n    <= W_{n+1} * prod_{k<=n} (B_k + W_k)    2 <= n < last
//     |dL/dw|_1    <= W_2
//
// The input-map bound counts one input channel per layer and assumes
// the running product stays >= 1 whenever biases are nonzero; with several
// input channels the sum runs over channels too and can exceed it. The
// derivative bounds count one output position per weight; the report prints
// that multiplicity next to them. The n = 1 case carries no product term, as
// printed in the source formula, even for chains deeper than two layers.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "backprop.hpp"
#include "error.hpp"
#include "network.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace ignet {

struct AmplitudePair {
    double weight = 0.0; // W
    double bias = 0.0;   // B
};

// One (W, B) pair per parameterized layer, in layer order.
struct InitAmplitudes {
    std::vector<AmplitudePair> layers;

    std::size_t size() const { return layers.size(); }
};

inline void init_weights(Network& net, const InitAmplitudes& amps, Rng& rng)
{
    const std::vector<std::size_t> params = net.parameterized_layers();
    if (amps.size() != params.size())
        throw ConfigError("got " + std::to_string(amps.size()) + " amplitude pairs for " +
                          std::to_string(params.size()) + " parameterized layers");
    for (std::size_t n = 0; n < params.size(); ++n) {
        const AmplitudePair& a = amps.layers[n];
        if (!(a.weight >= 0.0) || !(a.bias >= 0.0))
            throw ConfigError("amplitudes of layer " + std::to_string(n + 1) + " must be non-negative");
        FilterBank& bank = net.layers[params[n]].bank;
        const double w_limit = a.weight / static_cast<double>(bank.v * bank.h);
        for (auto& w : bank.weights)
            w = w_limit > 0.0 ? uniform(rng, -w_limit, w_limit) : 0.0;
        for (auto& b : bank.biases)
            b = a.bias > 0.0 ? uniform(rng, -a.bias, a.bias) : 0.0;
    }
}

namespace detail {
inline void check_layer_index(const InitAmplitudes& amps, std::size_t n)
{
    if (n < 1 || n > amps.size())
        throw ConfigError("layer index " + std::to_string(n) + " outside 1.." + std::to_string(amps.size()));
}

inline double amplitude_product(const InitAmplitudes& amps, std::size_t through)
{
    double product = 1.0;
    for (std::size_t k = 1; k <= through; ++k)
        product *= amps.layers[k - 1].bias + amps.layers[k - 1].weight;
    return product;
}
} // namespace detail

// n is 1-based over the parameterized layers. Layer 1 reads normalized samples.
inline double input_map_bound(const InitAmplitudes& amps, std::size_t n)
{
    detail::check_layer_index(amps, n);
    return detail::amplitude_product(amps, n - 1);
}

inline double weight_derivative_bound(const InitAmplitudes& amps, std::size_t n, double max_loss_grad)
{
    detail::check_layer_index(amps, n);
    if (!(max_loss_grad >= 0.0))
        throw ConfigError("maximum loss gradient must be non-negative");
    const std::size_t last = amps.size();
    if (n == last)
        return max_loss_grad * detail::amplitude_product(amps, last - 1);
    if (n == 1)
        return amps.layers[1].weight;
    return amps.layers[n].weight * detail::amplitude_product(amps, n);
}

struct DerivativeWindow {
    double low = 0.01;
    double high = 0.1;
};

enum class WindowFlag { Ok, Low, High };

inline WindowFlag classify(double value, const DerivativeWindow& window)
{
    if (value < window.low)
        return WindowFlag::Low;
    if (value > window.high)
        return WindowFlag::High;
    return WindowFlag::Ok;
}

struct LayerDiagnostics {
    std::size_t layer = 0;     // index into Network::layers
    std::size_t position = 0;  // 1-based among parameterized layers
    LayerKind kind = LayerKind::Conv;
    double mav_input_map = 0.0;
    double mav_activation_derivative = 0.0;
    double mav_weights = 0.0;
    double mav_bias_derivative = 0.0;         // per-neuron full derivative
    double mav_loss_weight_derivative = 0.0;
    double input_map_bound = 0.0;
    double weight_derivative_bound = 0.0;
    std::size_t multiplicity = 0;             // output positions sharing each weight
    WindowFlag flag = WindowFlag::Ok;
};

struct DiagnosticReport {
    std::vector<LayerDiagnostics> layers;
    DerivativeWindow window;
    double max_loss_grad = 0.0;

    bool all_in_window() const
    {
        for (const auto& l : layers)
            if (l.flag != WindowFlag::Ok)
                return false;
        return true;
    }
};

// One forward and one backward per probe sample, no update. MAVs are means of
// absolute values over every sample and every element.
inline DiagnosticReport diagnose(const Network& net, const InitAmplitudes& amps, std::span<const Example> probe,
                                 DerivativeWindow window = {}, WorkerPool* pool = nullptr)
{
    if (probe.empty())
        throw DataError("diagnosis needs at least one probe sample");
    const std::vector<std::size_t> params = net.parameterized_layers();
    if (amps.size() != params.size())
        throw ConfigError("amplitude pairs do not match the parameterized layers");

    struct SampleStats {
        std::vector<double> input, activation, bias, loss_weight;
        double max_loss_grad = 0.0;
    };
    std::vector<SampleStats> stats(probe.size());
    execute_stage(pool, probe.size(), [&](std::size_t s) {
        const Example& ex = probe[s];
        const ForwardTrace trace = forward(net, ex.input);
        std::vector<FeatureMap> sens;
        const Gradients g = backward(net, trace, ex.target, &sens);
        SampleStats& st = stats[s];
        for (double v : loss_output_gradient(net, trace, ex.target))
            st.max_loss_grad = std::max(st.max_loss_grad, std::abs(v));
        for (std::size_t l : params) {
            const LayerTrace& t = trace.layers[l];
            double in = 0.0, act = 0.0, bias = 0.0, lw = 0.0;
            for (double v : t.input.values)
                in += std::abs(v);
            for (double v : t.pre.values)
                act += std::abs(activation_eval(net.layers[l].spec.activation, v).derivative);
            for (double v : sens[l].values)
                bias += std::abs(v);
            for (double v : g.layers[l].weights)
                lw += std::abs(v);
            st.input.push_back(in / static_cast<double>(t.input.size()));
            st.activation.push_back(act / static_cast<double>(t.pre.size()));
            st.bias.push_back(bias / static_cast<double>(sens[l].size()));
            st.loss_weight.push_back(lw / static_cast<double>(g.layers[l].weights.size()));
        }
    });

    DiagnosticReport report;
    report.window = window;
    const double k = static_cast<double>(net.output_shape().size());
    for (const auto& st : stats)
        report.max_loss_grad = std::max(report.max_loss_grad, st.max_loss_grad);
    const double bound_loss_grad = net.loss == Loss::MAE && !net.ends_with_softmax() ? 1.0 / k : report.max_loss_grad;

    const auto count = static_cast<double>(probe.size());
    for (std::size_t n = 0; n < params.size(); ++n) {
        const Layer& layer = net.layers[params[n]];
        LayerDiagnostics d;
        d.layer = params[n];
        d.position = n + 1;
        d.kind = layer.spec.kind;
        for (const auto& st : stats) {
            d.mav_input_map += st.input[n];
            d.mav_activation_derivative += st.activation[n];
            d.mav_bias_derivative += st.bias[n];
            d.mav_loss_weight_derivative += st.loss_weight[n];
        }
        d.mav_input_map /= count;
        d.mav_activation_derivative /= count;
        d.mav_bias_derivative /= count;
        d.mav_loss_weight_derivative /= count;
        for (double w : layer.bank.weights)
            d.mav_weights += std::abs(w);
        d.mav_weights /= static_cast<double>(layer.bank.weights.size());
        d.input_map_bound = input_map_bound(amps, n + 1);
        d.weight_derivative_bound = weight_derivative_bound(amps, n + 1, bound_loss_grad);
        d.multiplicity = layer.output_shape.rows * layer.output_shape.cols;
        d.flag = classify(d.mav_loss_weight_derivative, window);
        report.layers.push_back(d);
    }
    return report;
}

namespace detail {
inline std::string sci(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%10.2e", v);
    return buf;
}
} // namespace detail

// Fixed-width table, one row per parameterized layer. Columns marked * are the
// input map, activation derivative, weights and bias derivative MAVs; *** is the
// loss/weight derivative MAV, which is flagged when it leaves the window.
inline std::string render_report(const DiagnosticReport& report)
{
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "acceptable dLoss/dw MAV window [%.2e, %.2e]\n", report.window.low,
                  report.window.high);
    out += line;
    std::snprintf(line, sizeof line, "%5s %-7s %10s %10s %10s %10s %10s %10s %10s %7s %s\n", "layer", "kind",
                  "In*", "N'*", "W*", "dL/db*", "dL/dw***", "|In|<=", "|dL/dw|<=", "shared", "flag");
    out += line;
    for (const auto& d : report.layers) {
        const char* flag = d.flag == WindowFlag::Low ? "LOW" : (d.flag == WindowFlag::High ? "HIGH" : "");
        std::snprintf(line, sizeof line, "%5zu %-7s %s %s %s %s %s %s %s %7zu %s\n", d.position, to_string(d.kind),
                      detail::sci(d.mav_input_map).c_str(), detail::sci(d.mav_activation_derivative).c_str(),
                      detail::sci(d.mav_weights).c_str(), detail::sci(d.mav_bias_derivative).c_str(),
                      detail::sci(d.mav_loss_weight_derivative).c_str(), detail::sci(d.input_map_bound).c_str(),
                      detail::sci(d.weight_derivative_bound).c_str(), d.multiplicity, flag);
        out += line;
    }
    return out;
}

} // namespace ignet
