#pragma once

// Binary model files.
//
// Layout (all integers little-endian; u8/u32/u64 unsigned, f64 IEEE-754 binary64):
//
//   "IGN1"                     magic
//   u32 version (= 1)
//   u8 loss  (0 mse, 1 mae, 2 cross-entropy)
//   u8 task  (0 classify, 1 regress)
//   u64 channels, u64 rows, u64 cols            network input shape
//   u64 layer count, then per layer:
//     u8 kind (0 conv, 1 maxpool, 2 dense, 3 softmax)
//     u64 outputs, u64 filter_v, u64 filter_h
//     u64 stride_v, stride_h, zero_pad_v, zero_pad_h, input_pad
//     u64 pool window_v, window_h, stride_v, stride_h
//     u8 activation (0 identity, 1 relu, 2 sigmoid, 3 bipolar sigmoid)
//     u8 bias_learning
//     u64 regularizer count, then per regularizer:
//       u8 kind (0 dropout, 1 dropconnect, 2 freezeconnect), f64 rate,
//       u8 resample (0 per run, 1 per epoch, 2 per batch)
//   per parameterized layer, in layer order:
//     u64 n, n x f64 weights (filter, channel, row, col order)
//     u64 m, m x f64 biases
//   u64 mask count (= layer count), then per layer: u64 n, n x u8 frozen flags
//   u64 factor group count, then per group: u8 group
//     (0 age, 1 who drew, 2 who is drawn, 3 age category, 4 age in months)
//   u64 category count, then per category: u64 parts, each u64 length + bytes
//
// Reading stops with a ParseError at the first inconsistency, including a
// truncated file or trailing bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "network.hpp"
#include "optimize.hpp"
#include "train.hpp"

namespace ignet {

struct Model {
    Network net;
    Task task = Task::Classify;
    EncoderSpec encoder;
    std::vector<Combination> categories;
    FreezeMasks freeze_masks; // one entry per layer, empty when nothing is frozen
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { out_.append(s); }
    void str(std::string_view s)
    {
        u64(s.size());
        bytes(s);
    }
    const std::string& data() const { return out_; }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    std::uint8_t u8()
    {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32()
    {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64()
    {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string_view bytes(std::size_t n)
    {
        need(n);
        const std::string_view s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() { return std::string(bytes(count(1))); }

    // A length prefix, checked against the bytes left so corrupt counts fail fast.
    std::size_t count(std::size_t element_size)
    {
        const std::uint64_t n = u64();
        if (n > (in_.size() - pos_) / element_size)
            throw ParseError("model file truncated or corrupt at byte " + std::to_string(pos_));
        return static_cast<std::size_t>(n);
    }

    bool at_end() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw ParseError("model file truncated at byte " + std::to_string(pos_));
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

template <typename E>
E enum_from(std::uint8_t v, std::uint8_t count, const char* what)
{
    if (v >= count)
        throw ParseError(std::string("model file has an invalid ") + what + " code " + std::to_string(v));
    return static_cast<E>(v);
}

} // namespace detail

inline constexpr std::uint32_t kModelVersion = 1;

inline std::string encode_model(const Model& m)
{
    detail::ByteWriter w;
    w.bytes("IGN1");
    w.u32(kModelVersion);
    w.u8(static_cast<std::uint8_t>(m.net.loss));
    w.u8(static_cast<std::uint8_t>(m.task));
    w.u64(m.net.input_shape.channels);
    w.u64(m.net.input_shape.rows);
    w.u64(m.net.input_shape.cols);
    w.u64(m.net.layers.size());
    for (const auto& layer : m.net.layers) {
        const LayerSpec& s = layer.spec;
        w.u8(static_cast<std::uint8_t>(s.kind));
        for (std::size_t v : {s.outputs, s.filter_v, s.filter_h, s.geometry.stride_v, s.geometry.stride_h,
                              s.geometry.zero_pad_v, s.geometry.zero_pad_h, s.geometry.input_pad, s.pool.window_v,
                              s.pool.window_h, s.pool.stride_v, s.pool.stride_h})
            w.u64(v);
        w.u8(static_cast<std::uint8_t>(s.activation));
        w.u8(s.bias_learning ? 1 : 0);
        w.u64(s.regularizers.size());
        for (const auto& r : s.regularizers) {
            w.u8(static_cast<std::uint8_t>(r.kind));
            w.f64(r.rate);
            w.u8(static_cast<std::uint8_t>(r.resample));
        }
    }
    for (const auto& layer : m.net.layers) {
        if (!layer.has_parameters())
            continue;
        w.u64(layer.bank.weights.size());
        for (double v : layer.bank.weights)
            w.f64(v);
        w.u64(layer.bank.biases.size());
        for (double v : layer.bank.biases)
            w.f64(v);
    }
    w.u64(m.net.layers.size());
    for (std::size_t l = 0; l < m.net.layers.size(); ++l) {
        const bool has = l < m.freeze_masks.size();
        w.u64(has ? m.freeze_masks[l].size() : 0);
        if (has)
            for (auto flag : m.freeze_masks[l].selected)
                w.u8(flag);
    }
    w.u64(m.encoder.groups.size());
    for (FactorGroup g : m.encoder.groups)
        w.u8(static_cast<std::uint8_t>(g));
    w.u64(m.categories.size());
    for (const auto& c : m.categories) {
        w.u64(c.size());
        for (const auto& part : c)
            w.str(part);
    }
    return w.data();
}

inline Model decode_model(std::string_view bytes)
{
    detail::ByteReader r(bytes);
    if (bytes.size() < 4 || r.bytes(4) != "IGN1")
        throw ParseError("not a model file (bad magic)");
    if (const std::uint32_t version = r.u32(); version != kModelVersion)
        throw ParseError("unsupported model version " + std::to_string(version));
    const Loss loss = detail::enum_from<Loss>(r.u8(), 3, "loss");
    Model m;
    m.task = detail::enum_from<Task>(r.u8(), 2, "task");
    Shape3 input;
    input.channels = r.u64();
    input.rows = r.u64();
    input.cols = r.u64();
    constexpr std::uint64_t kMaxExtent = 1u << 20;
    if (input.channels > kMaxExtent || input.rows > kMaxExtent || input.cols > kMaxExtent)
        throw ParseError("model file has an implausible input shape");

    std::vector<LayerSpec> specs(r.count(1));
    for (auto& s : specs) {
        s.kind = detail::enum_from<LayerKind>(r.u8(), 4, "layer kind");
        for (std::size_t* field : {&s.outputs, &s.filter_v, &s.filter_h, &s.geometry.stride_v, &s.geometry.stride_h,
                                   &s.geometry.zero_pad_v, &s.geometry.zero_pad_h, &s.geometry.input_pad,
                                   &s.pool.window_v, &s.pool.window_h, &s.pool.stride_v, &s.pool.stride_h})
            *field = static_cast<std::size_t>(r.u64());
        s.activation = detail::enum_from<Activation>(r.u8(), 4, "activation");
        s.bias_learning = r.u8() != 0;
        s.regularizers.resize(r.count(10));
        for (auto& reg : s.regularizers) {
            reg.kind = detail::enum_from<RegularizerKind>(r.u8(), 3, "regularizer");
            reg.rate = r.f64();
            reg.resample = detail::enum_from<Resample>(r.u8(), 3, "resample mode");
        }
    }
    try {
        m.net = build_network(specs, loss, input);
    } catch (const Error& e) {
        throw ParseError(std::string("model file describes an invalid network: ") + e.what());
    }

    for (auto& layer : m.net.layers) {
        if (!layer.has_parameters())
            continue;
        if (r.count(8) != layer.bank.weights.size())
            throw ParseError("model weight count does not match the layer geometry");
        for (auto& v : layer.bank.weights)
            v = r.f64();
        if (r.count(8) != layer.bank.biases.size())
            throw ParseError("model bias count does not match the layer geometry");
        for (auto& v : layer.bank.biases)
            v = r.f64();
    }
    if (r.count(8) != m.net.layers.size())
        throw ParseError("model freeze mask count does not match the layer count");
    m.freeze_masks.resize(m.net.layers.size());
    bool any = false;
    for (std::size_t l = 0; l < m.net.layers.size(); ++l) {
        const std::size_t n = r.count(1);
        if (n != 0 && n != m.net.layers[l].bank.weight_count())
            throw ParseError("freeze mask of layer " + std::to_string(l + 1) + " has the wrong size");
        m.freeze_masks[l] = WeightMask(n);
        for (auto& flag : m.freeze_masks[l].selected)
            flag = r.u8() != 0 ? 1 : 0;
        any = any || n != 0;
    }
    if (!any)
        m.freeze_masks.clear();
    m.encoder.groups.resize(r.count(1));
    for (auto& g : m.encoder.groups)
        g = detail::enum_from<FactorGroup>(r.u8(), 5, "factor group");
    m.categories.resize(r.count(8));
    for (auto& c : m.categories) {
        c.resize(r.count(8));
        for (auto& part : c)
            part = r.str();
    }
    if (!r.at_end())
        throw ParseError("model file has trailing bytes");
    return m;
}

inline void save_model(const std::filesystem::path& path, const Model& m)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::string bytes = encode_model(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("cannot write model " + path.string());
}

inline Model load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot read model " + path.string());
    std::ostringstream bytes;
    bytes << in.rdbuf();
    return decode_model(bytes.str());
}

} // namespace ignet
