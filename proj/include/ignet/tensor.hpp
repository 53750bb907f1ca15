#pragma once

// Dense feature maps, filter banks and the forward convolution/pooling kernels.
//
// Convolution here is cross-correlation (filters are not flipped), the usual
// CNN convention. Layout is channel-major, then row-major, everywhere.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"

namespace ignet {

struct Shape3 {
    std::size_t channels = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return channels * rows * cols; }
    bool operator==(const Shape3&) const = default;
};

inline std::string to_string(const Shape3& s)
{
    return std::to_string(s.channels) + "x" + std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

struct FeatureMap {
    Shape3 shape;
    std::vector<double> values;

    FeatureMap() = default;
    explicit FeatureMap(Shape3 s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
    FeatureMap(Shape3 s, std::vector<double> v) : shape(s), values(std::move(v))
    {
        if (values.size() != shape.size())
            throw ShapeError("feature map values do not match shape " + to_string(shape));
    }

    std::size_t index(std::size_t c, std::size_t r, std::size_t x) const
    {
        return (c * shape.rows + r) * shape.cols + x;
    }
    double& at(std::size_t c, std::size_t r, std::size_t x) { return values[index(c, r, x)]; }
    double at(std::size_t c, std::size_t r, std::size_t x) const { return values[index(c, r, x)]; }

    std::size_t size() const { return values.size(); }

    bool all_finite() const
    {
        for (double v : values)
            if (!std::isfinite(v))
                return false;
        return true;
    }
};

struct FilterBank {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t v = 0; // filter rows
    std::size_t h = 0; // filter cols
    std::vector<double> weights;
    std::vector<double> biases;
    bool bias_learning = false;

    FilterBank() = default;
    FilterBank(std::size_t out, std::size_t in, std::size_t rows, std::size_t cols)
        : out_channels(out), in_channels(in), v(rows), h(cols),
          weights(out * in * rows * cols, 0.0), biases(out, 0.0)
    {
    }

    std::size_t index(std::size_t o, std::size_t i, std::size_t p, std::size_t q) const
    {
        return ((o * in_channels + i) * v + p) * h + q;
    }
    double& weight(std::size_t o, std::size_t i, std::size_t p, std::size_t q) { return weights[index(o, i, p, q)]; }
    double weight(std::size_t o, std::size_t i, std::size_t p, std::size_t q) const { return weights[index(o, i, p, q)]; }

    std::size_t weight_count() const { return out_channels * in_channels * v * h; }

    bool same_dims(const FilterBank& other) const
    {
        return out_channels == other.out_channels && in_channels == other.in_channels && v == other.v &&
               h == other.h;
    }
};

// input_pad and the zero pads are both zero extension; they add up.
struct ConvGeometry {
    std::size_t stride_v = 1;
    std::size_t stride_h = 1;
    std::size_t zero_pad_v = 0;
    std::size_t zero_pad_h = 0;
    std::size_t input_pad = 0;

    std::size_t pad_v() const { return zero_pad_v + input_pad; }
    std::size_t pad_h() const { return zero_pad_h + input_pad; }
    bool operator==(const ConvGeometry&) const = default;
};

struct PoolWindow {
    std::size_t window_v = 2;
    std::size_t window_h = 2;
    std::size_t stride_v = 2;
    std::size_t stride_h = 2;
    bool operator==(const PoolWindow&) const = default;
};

namespace detail {
inline std::size_t sliding_extent(std::size_t in, std::size_t pad, std::size_t window, std::size_t stride,
                                  const char* axis)
{
    if (stride == 0)
        throw GeometryError(std::string("stride along ") + axis + " must be at least 1");
    const std::size_t padded = in + 2 * pad;
    if (window == 0 || window > padded)
        throw GeometryError(std::string("window of ") + std::to_string(window) + " along " + axis +
                            " does not fit padded extent " + std::to_string(padded));
    return (padded - window) / stride + 1;
}
} // namespace detail

inline Shape3 output_shape(const Shape3& input, const FilterBank& bank, const ConvGeometry& geom)
{
    if (bank.in_channels != input.channels)
        throw GeometryError("filter bank expects " + std::to_string(bank.in_channels) + " input channels, got " +
                            std::to_string(input.channels));
    return {bank.out_channels, detail::sliding_extent(input.rows, geom.pad_v(), bank.v, geom.stride_v, "rows"),
            detail::sliding_extent(input.cols, geom.pad_h(), bank.h, geom.stride_h, "cols")};
}

inline Shape3 output_shape(const Shape3& input, const PoolWindow& pool)
{
    return {input.channels, detail::sliding_extent(input.rows, 0, pool.window_v, pool.stride_v, "rows"),
            detail::sliding_extent(input.cols, 0, pool.window_h, pool.stride_h, "cols")};
}

// Pre-activation output: bias + sum over in-channels and window of weight * input.
// Output rows of each channel are independent work items when a pool is given.
inline FeatureMap convolve(const FeatureMap& input, const FilterBank& bank, const ConvGeometry& geom,
                           WorkerPool* pool = nullptr)
{
    const Shape3 out_shape = output_shape(input.shape, bank, geom);
    FeatureMap out(out_shape);
    const auto pad_v = static_cast<std::ptrdiff_t>(geom.pad_v());
    const auto pad_h = static_cast<std::ptrdiff_t>(geom.pad_h());
    const auto in_rows = static_cast<std::ptrdiff_t>(input.shape.rows);
    const auto in_cols = static_cast<std::ptrdiff_t>(input.shape.cols);

    execute_stage(pool, out_shape.channels * out_shape.rows, [&](std::size_t item) {
        const std::size_t o = item / out_shape.rows;
        const std::size_t r = item % out_shape.rows;
        for (std::size_t c = 0; c < out_shape.cols; ++c) {
            double sum = bank.biases[o];
            const auto top = static_cast<std::ptrdiff_t>(r * geom.stride_v) - pad_v;
            const auto left = static_cast<std::ptrdiff_t>(c * geom.stride_h) - pad_h;
            for (std::size_t i = 0; i < bank.in_channels; ++i) {
                for (std::size_t p = 0; p < bank.v; ++p) {
                    const std::ptrdiff_t y = top + static_cast<std::ptrdiff_t>(p);
                    if (y < 0 || y >= in_rows)
                        continue;
                    for (std::size_t q = 0; q < bank.h; ++q) {
                        const std::ptrdiff_t x = left + static_cast<std::ptrdiff_t>(q);
                        if (x < 0 || x >= in_cols)
                            continue;
                        sum += bank.weight(o, i, p, q) *
                               input.at(i, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                    }
                }
            }
            out.at(o, r, c) = sum;
        }
    });
    return out;
}

struct PoolResult {
    FeatureMap output;
    // Flat input index of the maximum chosen for every output element.
    std::vector<std::size_t> provenance;
};

// Window maximum; ties go to the first position in row-major scan order.
inline PoolResult max_pool(const FeatureMap& input, const PoolWindow& pool)
{
    const Shape3 out_shape = output_shape(input.shape, pool);
    PoolResult result{FeatureMap(out_shape), std::vector<std::size_t>(out_shape.size(), 0)};
    for (std::size_t ch = 0; ch < out_shape.channels; ++ch) {
        for (std::size_t r = 0; r < out_shape.rows; ++r) {
            for (std::size_t c = 0; c < out_shape.cols; ++c) {
                std::size_t best = input.index(ch, r * pool.stride_v, c * pool.stride_h);
                for (std::size_t p = 0; p < pool.window_v; ++p) {
                    for (std::size_t q = 0; q < pool.window_h; ++q) {
                        const std::size_t idx = input.index(ch, r * pool.stride_v + p, c * pool.stride_h + q);
                        if (input.values[idx] > input.values[best])
                            best = idx;
                    }
                }
                const std::size_t out_idx = result.output.index(ch, r, c);
                result.output.values[out_idx] = input.values[best];
                result.provenance[out_idx] = best;
            }
        }
    }
    return result;
}

} // namespace ignet
