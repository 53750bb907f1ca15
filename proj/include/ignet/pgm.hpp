#pragma once

// Portable graymap (P2 ASCII / P5 binary) reading and writing. Samples map to
// [0, 1] as p / maxval; writing uses maxval 255 and rounds to nearest.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace ignet {

namespace detail {
class PgmCursor {
public:
    explicit PgmCursor(const std::string& bytes) : bytes_(bytes) {}

    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    unsigned long number(const char* what)
    {
        skip_space_and_comments();
        std::size_t start = pos_;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
            ++pos_;
        if (start == pos_)
            throw DataError(std::string("graymap: expected ") + what);
        return std::stoul(bytes_.substr(start, pos_ - start));
    }

    std::size_t pos_ = 0;
    const std::string& bytes_;
};
} // namespace detail

inline FeatureMap decode_pgm(const std::string& bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5'))
        throw DataError("graymap: missing P2/P5 magic");
    const bool binary = bytes[1] == '5';
    detail::PgmCursor cur(bytes);
    cur.pos_ = 2;
    const unsigned long cols = cur.number("width");
    const unsigned long rows = cur.number("height");
    const unsigned long maxval = cur.number("maxval");
    if (cols == 0 || rows == 0)
        throw DataError("graymap: zero dimension");
    if (maxval == 0 || maxval > 65535)
        throw DataError("graymap: maxval out of range");

    FeatureMap img(Shape3{1, rows, cols});
    const double scale = 1.0 / static_cast<double>(maxval);
    if (binary) {
        // Exactly one whitespace byte separates the header from the raster.
        ++cur.pos_;
        const std::size_t width = maxval < 256 ? 1 : 2;
        if (bytes.size() < cur.pos_ + img.size() * width)
            throw DataError("graymap: truncated raster");
        for (std::size_t i = 0; i < img.size(); ++i) {
            unsigned long v = static_cast<unsigned char>(bytes[cur.pos_ + i * width]);
            if (width == 2)
                v = (v << 8) | static_cast<unsigned char>(bytes[cur.pos_ + i * width + 1]);
            if (v > maxval)
                throw DataError("graymap: sample exceeds maxval");
            img.values[i] = static_cast<double>(v) * scale;
        }
    } else {
        for (std::size_t i = 0; i < img.size(); ++i) {
            const unsigned long v = cur.number("sample");
            if (v > maxval)
                throw DataError("graymap: sample exceeds maxval");
            img.values[i] = static_cast<double>(v) * scale;
        }
    }
    return img;
}

inline FeatureMap read_pgm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_pgm(bytes);
    } catch (const DataError& e) {
        throw DataError(path.filename().string() + ": " + e.what());
    }
}

inline unsigned to_gray8(double v)
{
    return static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::string encode_pgm(const FeatureMap& img, bool binary = true)
{
    if (img.shape.channels != 1)
        throw ShapeError("graymap needs a single-channel image");
    std::string out = (binary ? "P5\n" : "P2\n") + std::to_string(img.shape.cols) + " " +
                      std::to_string(img.shape.rows) + "\n255\n";
    if (binary) {
        for (double v : img.values)
            out.push_back(static_cast<char>(to_gray8(v)));
    } else {
        for (std::size_t r = 0; r < img.shape.rows; ++r) {
            for (std::size_t c = 0; c < img.shape.cols; ++c) {
                if (c)
                    out.push_back(' ');
                out += std::to_string(to_gray8(img.at(0, r, c)));
            }
            out.push_back('\n');
        }
    }
    return out;
}

inline void write_pgm(const std::filesystem::path& path, const FeatureMap& img, bool binary = true)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    const std::string bytes = encode_pgm(img, binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("failed writing " + path.string());
}

} // namespace ignet
