#pragma once

// Experiment configuration in a line-based `section.key = value` format.
//
//   # comment
//   task.kind = regress
//   net.preset = shallow
//   init.1.W = 5
//   init.2.W = 10
//   opt.kind = momentum
//
// Blank lines and text after '#' are ignored. Keys may appear once. Layers are
// either a preset (net.preset) or an explicit list (layer.1.kind, layer.2.kind,
// ...), never both. A dense layer with `outputs = auto` (the default for the
// last parameterized layer) gets one output per category when classifying and
// one output when regressing.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "init_diag.hpp"
#include "network.hpp"
#include "optimize.hpp"
#include "train.hpp"

namespace ignet {

enum class Preset { None, Shallow, Deep };

struct ExperimentConfig {
    Task task = Task::Classify;
    EncoderSpec encoder{{FactorGroup::AgeCategory}};
    std::optional<Loss> loss; // defaults to cross-entropy when classifying, MAE when regressing

    Preset preset = Preset::None;
    std::size_t preset_filters = 4;
    std::size_t preset_filter = 5;
    double preset_freeze = 0.0;
    std::vector<LayerSpec> layers; // explicit layers; outputs == 0 means auto

    InitAmplitudes amplitudes; // missing pairs default to W = 1, B = 0
    OptimizerConfig opt;
    CvConfig cv;

    std::size_t rows = 36;
    std::size_t cols = 58;
    AugmentConfig augment;

    DerivativeWindow window;
    std::size_t probe = 64;

    std::size_t synth_classes = 3;
    std::size_t synth_per_class = 40;

    Loss resolved_loss() const { return loss.value_or(task == Task::Classify ? Loss::CrossEntropy : Loss::MAE); }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos)
            return out;
        start = pos + 1;
    }
}

class ConfigReader {
public:
    ConfigReader(std::string key, std::string value) : key_(std::move(key)), value_(std::move(value)) {}

    [[noreturn]] void fail(const std::string& what) const
    {
        throw ConfigError(key_ + " = " + value_ + ": " + what);
    }

    const std::string& text() const { return value_; }

    double real() const
    {
        double v = 0.0;
        const auto [end, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
        if (ec != std::errc{} || end != value_.data() + value_.size() || !std::isfinite(v))
            fail("expected a number");
        return v;
    }

    std::size_t count(std::string_view s) const
    {
        std::size_t v = 0;
        const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || end != s.data() + s.size())
            fail("expected a non-negative integer");
        return v;
    }
    std::size_t count() const { return count(value_); }

    // "5x5" or "5" (square).
    std::pair<std::size_t, std::size_t> pair() const
    {
        const auto parts = split(value_, 'x');
        if (parts.size() == 1)
            return {count(parts[0]), count(parts[0])};
        if (parts.size() != 2)
            fail("expected AxB");
        return {count(parts[0]), count(parts[1])};
    }

    bool flag() const
    {
        if (value_ == "true" || value_ == "on" || value_ == "1")
            return true;
        if (value_ == "false" || value_ == "off" || value_ == "0")
            return false;
        fail("expected true or false");
    }

    template <typename T>
    T choice(std::initializer_list<std::pair<std::string_view, T>> options) const
    {
        std::string names;
        for (const auto& [name, v] : options) {
            if (value_ == name)
                return v;
            names += (names.empty() ? "" : ", ") + std::string(name);
        }
        fail("expected one of " + names);
    }

private:
    std::string key_;
    std::string value_;
};

inline Activation parse_activation(const ConfigReader& r)
{
    return r.choice<Activation>({{"identity", Activation::Identity},
                                 {"relu", Activation::Relu},
                                 {"sigmoid", Activation::Sigmoid},
                                 {"bipolar_sigmoid", Activation::BipolarSigmoid}});
}

inline Loss parse_loss(const ConfigReader& r)
{
    return r.choice<Loss>({{"mse", Loss::MSE}, {"mae", Loss::MAE}, {"cross_entropy", Loss::CrossEntropy}});
}

inline void set_regularizer(LayerSpec& spec, RegularizerKind kind, double rate)
{
    for (auto& existing : spec.regularizers)
        if (existing.kind == kind) {
            existing.rate = rate;
            return;
        }
    spec.regularizers.push_back({kind, rate, Resample::PerRun});
}

inline void apply_layer_key(LayerSpec& spec, const std::string& field, const ConfigReader& r)
{
    if (field == "kind") {
        spec.kind = r.choice<LayerKind>({{"conv", LayerKind::Conv},
                                         {"dense", LayerKind::Dense},
                                         {"maxpool", LayerKind::MaxPool},
                                         {"softmax", LayerKind::Softmax}});
    } else if (field == "filters" || field == "outputs") {
        spec.outputs = r.text() == "auto" ? 0 : r.count();
        if (r.text() != "auto" && spec.outputs == 0)
            r.fail("must be at least 1");
    } else if (field == "filter") {
        std::tie(spec.filter_v, spec.filter_h) = r.pair();
    } else if (field == "stride") {
        std::tie(spec.geometry.stride_v, spec.geometry.stride_h) = r.pair();
    } else if (field == "pad") {
        std::tie(spec.geometry.zero_pad_v, spec.geometry.zero_pad_h) = r.pair();
    } else if (field == "input_pad") {
        spec.geometry.input_pad = r.count();
    } else if (field == "pool") {
        std::tie(spec.pool.window_v, spec.pool.window_h) = r.pair();
    } else if (field == "pool_stride") {
        std::tie(spec.pool.stride_v, spec.pool.stride_h) = r.pair();
    } else if (field == "activation") {
        spec.activation = parse_activation(r);
    } else if (field == "bias_learning") {
        spec.bias_learning = r.flag();
    } else if (field == "dropout") {
        set_regularizer(spec, RegularizerKind::Dropout, r.real());
    } else if (field == "dropconnect") {
        set_regularizer(spec, RegularizerKind::Dropconnect, r.real());
    } else if (field == "freezeconnect") {
        set_regularizer(spec, RegularizerKind::Freezeconnect, r.real());
    } else if (field == "resample") {
        const Resample when =
            r.choice<Resample>({{"run", Resample::PerRun}, {"epoch", Resample::PerEpoch}, {"batch", Resample::PerBatch}});
        bool found = false;
        for (auto& reg : spec.regularizers)
            if (reg.kind == RegularizerKind::Freezeconnect) {
                reg.resample = when;
                found = true;
            }
        if (!found)
            r.fail("resample must follow a freezeconnect rate");
    } else {
        r.fail("unknown layer field '" + field + "'");
    }
}

// 1-based index field of "section.N.field"; N must be a positive integer.
inline std::size_t layer_index(const ConfigReader& r, const std::string& text)
{
    const std::size_t n = r.count(text);
    if (n == 0 || n > 1000)
        r.fail("layer index must lie in 1..1000");
    return n;
}

} // namespace detail

inline ExperimentConfig parse_config(std::string_view text)
{
    ExperimentConfig cfg;
    std::map<std::size_t, LayerSpec> layers;
    std::map<std::size_t, AmplitudePair> amps;
    std::map<std::string, std::size_t> seen;

    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
        if (const auto [it, inserted] = seen.try_emplace(key, line_no); !inserted)
            throw ConfigError("line " + std::to_string(line_no) + ": " + key + " already set on line " +
                              std::to_string(it->second));

        const detail::ConfigReader r(key, value);
        const auto parts = detail::split(key, '.');
        const std::string& section = parts[0];

        if (section == "layer" && parts.size() == 3) {
            detail::apply_layer_key(layers[detail::layer_index(r, parts[1])], parts[2], r);
            continue;
        }
        if (section == "init" && parts.size() == 3) {
            AmplitudePair& a = amps[detail::layer_index(r, parts[1])];
            if (parts[2] == "W")
                a.weight = r.real();
            else if (parts[2] == "B")
                a.bias = r.real();
            else
                r.fail("expected init.N.W or init.N.B");
            continue;
        }
        if (parts.size() != 2)
            r.fail("unknown key");
        const std::string& name = parts[1];

        if (section == "task" && name == "kind") {
            cfg.task = r.choice<Task>({{"classify", Task::Classify}, {"regress", Task::Regress}});
        } else if (section == "task" && name == "groups") {
            cfg.encoder.groups.clear();
            for (const auto& g : detail::split(value, ','))
                cfg.encoder.groups.push_back(parse_factor_group(g));
        } else if (section == "net" && name == "loss") {
            cfg.loss = detail::parse_loss(r);
        } else if (section == "net" && name == "preset") {
            cfg.preset = r.choice<Preset>({{"shallow", Preset::Shallow}, {"deep", Preset::Deep}});
        } else if (section == "net" && name == "filters") {
            cfg.preset_filters = r.count();
        } else if (section == "net" && name == "filter") {
            cfg.preset_filter = r.count();
        } else if (section == "net" && name == "freeze") {
            cfg.preset_freeze = r.real();
        } else if (section == "opt" && name == "kind") {
            cfg.opt.kind = r.choice<OptimizerKind>(
                {{"plain", OptimizerKind::Plain}, {"momentum", OptimizerKind::Momentum}, {"nag", OptimizerKind::Nag}});
        } else if (section == "opt" && name == "lr") {
            cfg.opt.learning_rate = r.real();
        } else if (section == "opt" && name == "momentum") {
            cfg.opt.momentum = r.real();
        } else if (section == "opt" && name == "batch") {
            cfg.opt.batch_size = r.count();
        } else if (section == "cv" && name == "folds") {
            cfg.cv.folds = r.count();
        } else if (section == "cv" && name == "repeats") {
            cfg.cv.repeats_per_fold = r.count();
        } else if (section == "cv" && name == "tolerance") {
            cfg.cv.tolerance = r.count();
        } else if (section == "cv" && name == "validation_fraction") {
            cfg.cv.validation_fraction = r.real();
        } else if (section == "data" && name == "size") {
            std::tie(cfg.rows, cfg.cols) = r.pair();
        } else if (section == "augment" && name == "multiplier") {
            cfg.augment.multiplier = r.count();
        } else if (section == "augment" && name == "rotation") {
            cfg.augment.rotation_max_deg = r.real();
        } else if (section == "augment" && name == "stretch_min") {
            cfg.augment.stretch_min = r.real();
        } else if (section == "augment" && name == "stretch_max") {
            cfg.augment.stretch_max = r.real();
        } else if (section == "augment" && name == "noise_level") {
            cfg.augment.noise_level = r.real();
        } else if (section == "augment" && name == "noise_fraction") {
            cfg.augment.noise_fraction = r.real();
        } else if (section == "diag" && name == "low") {
            cfg.window.low = r.real();
        } else if (section == "diag" && name == "high") {
            cfg.window.high = r.real();
        } else if (section == "diag" && name == "probe") {
            cfg.probe = r.count();
        } else if (section == "synth" && name == "classes") {
            cfg.synth_classes = r.count();
        } else if (section == "synth" && name == "per_class") {
            cfg.synth_per_class = r.count();
        } else {
            r.fail("unknown key");
        }
    }

    if (!layers.empty() && cfg.preset != Preset::None)
        throw ConfigError("net.preset and layer.N keys are mutually exclusive");
    std::size_t expect = 1;
    for (auto& [n, spec] : layers) {
        if (n != expect++)
            throw ConfigError("layer indices must run 1, 2, ... without gaps; layer " + std::to_string(expect - 1) +
                              " is missing");
        cfg.layers.push_back(spec);
    }
    expect = 1;
    for (const auto& [n, a] : amps) {
        if (n != expect++)
            throw ConfigError("init indices must run 1, 2, ... without gaps; init." + std::to_string(expect - 1) +
                              " is missing");
        cfg.amplitudes.layers.push_back(a);
    }

    if (cfg.preset == Preset::None && cfg.layers.empty())
        throw ConfigError("no network: set net.preset or layer.N.kind");
    if (cfg.encoder.groups.empty())
        throw ConfigError("task.groups must name at least one factor group");
    if (cfg.rows == 0 || cfg.cols == 0)
        throw ConfigError("data.size must be positive");
    if (cfg.probe == 0)
        throw ConfigError("diag.probe must be at least 1");
    if (!(cfg.window.low > 0.0) || !(cfg.window.high > cfg.window.low))
        throw ConfigError("diag window needs 0 < low < high");
    cfg.opt.validate();
    cfg.cv.validate();
    cfg.augment.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_config(text.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// Layer list with auto outputs resolved.
inline std::vector<LayerSpec> resolve_layers(const ExperimentConfig& cfg, std::size_t outputs)
{
    const bool classify = cfg.task == Task::Classify;
    std::vector<LayerSpec> specs;
    switch (cfg.preset) {
    case Preset::Shallow:
        specs = shallow_preset(outputs, classify, cfg.preset_filters, cfg.preset_filter);
        break;
    case Preset::Deep:
        specs = deep_preset(outputs, classify, cfg.preset_freeze);
        break;
    case Preset::None:
        specs = cfg.layers;
        break;
    }
    std::size_t last_param = specs.size();
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].kind == LayerKind::Conv || specs[i].kind == LayerKind::Dense)
            last_param = i;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].outputs != 0 || (specs[i].kind != LayerKind::Conv && specs[i].kind != LayerKind::Dense))
            continue;
        if (i != last_param || specs[i].kind != LayerKind::Dense)
            throw ConfigError("layer " + std::to_string(i + 1) + " needs an explicit outputs/filters count");
        specs[i].outputs = outputs;
    }
    return specs;
}

// Amplitudes padded with W = 1, B = 0 up to the parameterized layer count.
inline InitAmplitudes resolve_amplitudes(const ExperimentConfig& cfg, const Network& net)
{
    const std::size_t count = net.parameterized_layers().size();
    if (cfg.amplitudes.size() > count)
        throw ConfigError("init." + std::to_string(cfg.amplitudes.size()) + " set but the network has only " +
                          std::to_string(count) + " parameterized layers");
    InitAmplitudes amps = cfg.amplitudes;
    amps.layers.resize(count, AmplitudePair{1.0, 0.0});
    return amps;
}

inline Network build_from_config(const ExperimentConfig& cfg, std::size_t outputs)
{
    return build_network(resolve_layers(cfg, outputs), cfg.resolved_loss(), {1, cfg.rows, cfg.cols});
}

} // namespace ignet
