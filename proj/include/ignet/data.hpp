#pragma once

// Drawing corpus handling: filename labels, image contraction, augmentation,
// one-hot encoding over factor combinations, and a synthetic stand-in corpus.
//
// Filenames follow <category>-<id><author>-<years>.<months><drawn>.<ext>, e.g.
// "p3-67w-6.7f.jpeg": category p3, subject 67, author code w, 6 years 7 months,
// drawn figure female.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "pgm.hpp"
#include "random.hpp"
#include "regularize.hpp"
#include "tensor.hpp"

namespace ignet {

enum class AuthorGender { Girl, Boy };
enum class DrawnGender { Female, Male };

struct AuthorInfo {
    AuthorGender gender = AuthorGender::Girl;
    bool self_portrait = false;
    bool operator==(const AuthorInfo&) const = default;
};

using AuthorCodeTable = std::map<char, AuthorInfo>;

// Only the codes attested in the source corpus description.
inline AuthorCodeTable default_author_codes()
{
    return {{'w', {AuthorGender::Girl, false}}, {'s', {AuthorGender::Boy, true}}};
}

struct LabelRecord {
    std::string age_category;
    int subject_id = 0;
    char author_code = 'w';
    AuthorInfo author;
    int years = 0;
    int months = 0;
    int age_months = 0;
    DrawnGender drawn_gender = DrawnGender::Female;
    std::string extension = "pgm";

    bool operator==(const LabelRecord&) const = default;
};

namespace detail {
inline int parse_int_field(std::string_view text, const std::string& name, const char* field)
{
    if (text.empty() || text.size() > 6 ||
        !std::all_of(text.begin(), text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw ParseError("'" + name + "': bad " + field + " field '" + std::string(text) + "'");
    return std::stoi(std::string(text));
}
} // namespace detail

inline LabelRecord parse_filename(std::string_view path, const AuthorCodeTable& codes = default_author_codes())
{
    const std::string name = std::filesystem::path(std::string(path)).filename().string();
    LabelRecord rec;

    const std::size_t dash1 = name.find('-');
    if (dash1 == std::string::npos || dash1 == 0)
        throw ParseError("'" + name + "': missing age category field");
    rec.age_category = name.substr(0, dash1);
    if (!std::isalpha(static_cast<unsigned char>(rec.age_category[0])) ||
        !std::all_of(rec.age_category.begin(), rec.age_category.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)); }))
        throw ParseError("'" + name + "': bad age category field '" + rec.age_category + "'");

    const std::size_t dash2 = name.find('-', dash1 + 1);
    if (dash2 == std::string::npos || dash2 < dash1 + 3)
        throw ParseError("'" + name + "': missing subject/author field");
    const std::string_view subject(name.data() + dash1 + 1, dash2 - dash1 - 2);
    rec.subject_id = detail::parse_int_field(subject, name, "subject id");
    rec.author_code = name[dash2 - 1];
    const auto code = codes.find(rec.author_code);
    if (code == codes.end()) {
        std::string known;
        for (const auto& [c, info] : codes)
            known += known.empty() ? std::string(1, c) : std::string(", ") + c;
        throw ParseError("'" + name + "': unknown author code '" + std::string(1, rec.author_code) +
                         "' (known: " + known + ")");
    }
    rec.author = code->second;

    const std::string rest = name.substr(dash2 + 1);
    const std::size_t dot1 = rest.find('.');
    const std::size_t dot2 = dot1 == std::string::npos ? std::string::npos : rest.find('.', dot1 + 1);
    if (dot1 == std::string::npos || dot2 == std::string::npos || dot2 < dot1 + 3)
        throw ParseError("'" + name + "': missing age field");
    rec.years = detail::parse_int_field(std::string_view(rest).substr(0, dot1), name, "age years");
    rec.months = detail::parse_int_field(std::string_view(rest).substr(dot1 + 1, dot2 - dot1 - 2), name,
                                         "age months");
    if (rec.months > 11)
        throw ParseError("'" + name + "': age months field must be 0..11");
    const char drawn = rest[dot2 - 1];
    if (drawn != 'f' && drawn != 'm')
        throw ParseError("'" + name + "': drawn gender field must be f or m, got '" + std::string(1, drawn) + "'");
    rec.drawn_gender = drawn == 'f' ? DrawnGender::Female : DrawnGender::Male;
    rec.extension = rest.substr(dot2 + 1);
    if (rec.extension.empty())
        throw ParseError("'" + name + "': missing extension");
    rec.age_months = 12 * rec.years + rec.months;
    return rec;
}

inline std::string render_filename(const LabelRecord& rec)
{
    return rec.age_category + "-" + std::to_string(rec.subject_id) + rec.author_code + "-" +
           std::to_string(rec.years) + "." + std::to_string(rec.months) +
           (rec.drawn_gender == DrawnGender::Female ? "f" : "m") + "." + rec.extension;
}

inline double regression_target(const LabelRecord& rec)
{
    return static_cast<double>(rec.age_months);
}

struct Sample {
    FeatureMap image; // 1 channel, values in [0, 1]
    LabelRecord label;
};

// Area-averaged resampling. Every source pixel contributes the same total
// weight, so the global mean is preserved.
inline FeatureMap contract_image(const FeatureMap& img, std::size_t rows, std::size_t cols)
{
    if (rows == 0 || cols == 0)
        throw ShapeError("contraction target must be non-empty");
    if (img.shape.rows == 0 || img.shape.cols == 0)
        throw ShapeError("contraction source must be non-empty");
    if (img.shape.rows == rows && img.shape.cols == cols)
        return img;

    struct Tap {
        std::size_t index;
        double weight;
    };
    auto taps = [](std::size_t src, std::size_t dst) {
        std::vector<std::vector<Tap>> out(dst);
        const double ratio = static_cast<double>(src) / static_cast<double>(dst);
        for (std::size_t d = 0; d < dst; ++d) {
            const double lo = static_cast<double>(d) * ratio;
            const double hi = static_cast<double>(d + 1) * ratio;
            for (auto s = static_cast<std::size_t>(std::floor(lo)); s < src && static_cast<double>(s) < hi; ++s) {
                const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
                if (overlap > 0.0)
                    out[d].push_back({s, overlap / ratio});
            }
        }
        return out;
    };
    const auto row_taps = taps(img.shape.rows, rows);
    const auto col_taps = taps(img.shape.cols, cols);

    FeatureMap out(Shape3{img.shape.channels, rows, cols});
    for (std::size_t ch = 0; ch < img.shape.channels; ++ch)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                double sum = 0.0;
                for (const Tap& tr : row_taps[r])
                    for (const Tap& tc : col_taps[c])
                        sum += tr.weight * tc.weight * img.at(ch, tr.index, tc.index);
                out.at(ch, r, c) = sum;
            }
    return out;
}

struct AugmentConfig {
    double rotation_max_deg = 5.0;
    double stretch_min = 0.95;
    double stretch_max = 1.05;
    double noise_level = 0.1;    // perturbation amplitude, in pixel range units
    double noise_fraction = 0.02; // portion of pixels perturbed
    std::size_t multiplier = 10;  // outputs per input, original included

    void validate() const
    {
        if (multiplier == 0)
            throw ConfigError("augmentation multiplier must be at least 1");
        if (!(rotation_max_deg >= 0.0))
            throw ConfigError("rotation range must be non-negative");
        if (!(stretch_min > 0.0) || !(stretch_max >= stretch_min))
            throw ConfigError("stretch factors must be positive with min <= max");
        if (!(noise_level >= 0.0 && noise_level <= 1.0) || !(noise_fraction >= 0.0 && noise_fraction <= 1.0))
            throw ConfigError("noise level and fraction must lie in [0, 1]");
    }
};

namespace detail {
inline double pixel_or_background(const FeatureMap& img, std::ptrdiff_t r, std::ptrdiff_t c)
{
    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(img.shape.rows) ||
        c >= static_cast<std::ptrdiff_t>(img.shape.cols))
        return 0.0;
    return img.at(0, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

// Inverse-mapped bilinear resampling of a rotation about the center followed
// by axis scalings.
inline FeatureMap warp(const FeatureMap& img, double angle_rad, double scale_v, double scale_h)
{
    FeatureMap out(img.shape);
    const double cr = (static_cast<double>(img.shape.rows) - 1.0) / 2.0;
    const double cc = (static_cast<double>(img.shape.cols) - 1.0) / 2.0;
    const double cs = std::cos(angle_rad);
    const double sn = std::sin(angle_rad);
    for (std::size_t r = 0; r < img.shape.rows; ++r)
        for (std::size_t c = 0; c < img.shape.cols; ++c) {
            const double dy = static_cast<double>(r) - cr;
            const double dx = static_cast<double>(c) - cc;
            // Undo the rotation, then the scaling.
            const double ry = (cs * dy - sn * dx) / scale_v;
            const double rx = (sn * dy + cs * dx) / scale_h;
            const double sy = ry + cr;
            const double sx = rx + cc;
            const double fy = std::floor(sy);
            const double fx = std::floor(sx);
            const double ty = sy - fy;
            const double tx = sx - fx;
            const auto y0 = static_cast<std::ptrdiff_t>(fy);
            const auto x0 = static_cast<std::ptrdiff_t>(fx);
            double v = (1.0 - ty) * (1.0 - tx) * pixel_or_background(img, y0, x0);
            if (tx != 0.0)
                v += (1.0 - ty) * tx * pixel_or_background(img, y0, x0 + 1);
            if (ty != 0.0) {
                v += ty * (1.0 - tx) * pixel_or_background(img, y0 + 1, x0);
                if (tx != 0.0)
                    v += ty * tx * pixel_or_background(img, y0 + 1, x0 + 1);
            }
            out.at(0, r, c) = std::clamp(v, 0.0, 1.0);
        }
    return out;
}
} // namespace detail

// The original plus multiplier-1 transformed copies. Each copy is rotated,
// stretched, then noised on exactly round(noise_fraction * pixels) pixels.
inline std::vector<Sample> augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng)
{
    cfg.validate();
    if (sample.image.shape.channels != 1)
        throw ShapeError("augmentation expects single-channel images");
    std::vector<Sample> out;
    out.reserve(cfg.multiplier);
    out.push_back(sample);
    for (std::size_t m = 1; m < cfg.multiplier; ++m) {
        const double max_rad = cfg.rotation_max_deg * std::numbers::pi / 180.0;
        const double angle = max_rad > 0.0 ? uniform(rng, -max_rad, max_rad) : 0.0;
        const bool stretches = cfg.stretch_max > cfg.stretch_min;
        const double sv = stretches ? uniform(rng, cfg.stretch_min, cfg.stretch_max) : cfg.stretch_min;
        const double sh = stretches ? uniform(rng, cfg.stretch_min, cfg.stretch_max) : cfg.stretch_min;

        Sample copy{angle == 0.0 && sv == 1.0 && sh == 1.0 ? sample.image
                                                            : detail::warp(sample.image, angle, sv, sh),
                    sample.label};
        if (cfg.noise_fraction > 0.0 && cfg.noise_level > 0.0) {
            const WeightMask chosen = sample_mask(copy.image.size(), cfg.noise_fraction, rng);
            for (std::size_t i = 0; i < chosen.size(); ++i)
                if (chosen[i])
                    copy.image.values[i] =
                        std::clamp(copy.image.values[i] + uniform(rng, -cfg.noise_level, cfg.noise_level), 0.0, 1.0);
        }
        out.push_back(std::move(copy));
    }
    return out;
}

// Augments every sample with its own stream derived from (seed, index), so the
// result does not depend on processing order.
inline std::vector<Sample> augment_all(const std::vector<Sample>& samples, const AugmentConfig& cfg,
                                       std::uint64_t seed)
{
    std::vector<Sample> out;
    out.reserve(samples.size() * cfg.multiplier);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Rng rng = derive_rng(seed, {0xa11, i});
        for (auto& s : augment(samples[i], cfg, rng))
            out.push_back(std::move(s));
    }
    return out;
}

enum class FactorGroup { Age, WhoDrew, WhoIsDrawn, AgeCategory, AgeInMonths };

inline const char* to_string(FactorGroup g)
{
    switch (g) {
    case FactorGroup::Age: return "age";
    case FactorGroup::WhoDrew: return "who_drew";
    case FactorGroup::WhoIsDrawn: return "who_is_drawn";
    case FactorGroup::AgeCategory: return "age_category";
    case FactorGroup::AgeInMonths: return "age_in_months";
    }
    return "?";
}

inline FactorGroup parse_factor_group(std::string_view name)
{
    for (FactorGroup g : {FactorGroup::Age, FactorGroup::WhoDrew, FactorGroup::WhoIsDrawn, FactorGroup::AgeCategory,
                          FactorGroup::AgeInMonths})
        if (name == to_string(g))
            return g;
    throw ConfigError("unknown factor group '" + std::string(name) + "'");
}

struct EncoderSpec {
    std::vector<FactorGroup> groups;
};

// "age" is the Y.M string; "age_in_months" is the integer month count.
inline std::string factor_value(const LabelRecord& rec, FactorGroup g)
{
    switch (g) {
    case FactorGroup::Age: return std::to_string(rec.years) + "." + std::to_string(rec.months);
    case FactorGroup::WhoDrew: return std::string(1, rec.author_code);
    case FactorGroup::WhoIsDrawn: return rec.drawn_gender == DrawnGender::Female ? "f" : "m";
    case FactorGroup::AgeCategory: return rec.age_category;
    case FactorGroup::AgeInMonths: return std::to_string(rec.age_months);
    }
    return {};
}

using Combination = std::vector<std::string>;

inline Combination combination_of(const LabelRecord& rec, const EncoderSpec& spec)
{
    Combination key;
    for (FactorGroup g : spec.groups)
        key.push_back(factor_value(rec, g));
    return key;
}

struct OneHotEncoding {
    std::vector<Combination> categories; // sorted lexicographically
    std::vector<std::size_t> class_index; // per record
    std::vector<std::vector<double>> vectors;

    std::size_t category_count() const { return categories.size(); }
};

inline std::vector<double> one_hot(std::size_t index, std::size_t count)
{
    std::vector<double> v(count, 0.0);
    v.at(index) = 1.0;
    return v;
}

// Encodes records against a fixed category table.
inline OneHotEncoding encode_with_table(const std::vector<LabelRecord>& records, const EncoderSpec& spec,
                                        std::vector<Combination> table)
{
    if (spec.groups.empty())
        throw ConfigError("one-hot encoding needs at least one factor group");
    OneHotEncoding enc;
    enc.categories = std::move(table);
    for (const auto& rec : records) {
        const Combination key = combination_of(rec, spec);
        const auto it = std::lower_bound(enc.categories.begin(), enc.categories.end(), key);
        if (it == enc.categories.end() || *it != key)
            throw DataError("record " + render_filename(rec) + " has a combination outside the category table");
        const auto idx = static_cast<std::size_t>(it - enc.categories.begin());
        enc.class_index.push_back(idx);
        enc.vectors.push_back(one_hot(idx, enc.categories.size()));
    }
    return enc;
}

// One category per distinct occurring combination of the selected groups.
inline OneHotEncoding encode_onehot(const std::vector<LabelRecord>& records, const EncoderSpec& spec)
{
    if (spec.groups.empty())
        throw ConfigError("one-hot encoding needs at least one factor group");
    if (records.empty())
        throw DataError("one-hot encoding needs at least one record");
    std::vector<Combination> table;
    for (const auto& rec : records)
        table.push_back(combination_of(rec, spec));
    std::sort(table.begin(), table.end());
    table.erase(std::unique(table.begin(), table.end()), table.end());
    return encode_with_table(records, spec, std::move(table));
}

inline std::string join_combination(const Combination& c)
{
    std::string out;
    for (std::size_t i = 0; i < c.size(); ++i)
        out += (i ? "," : "") + c[i];
    return out;
}

// Synthetic corpus: class k draws s parallel strokes at orientation k*180/K
// degrees, s in 3..8, with jittered center and angle. Strokes fill fixed slots
// outward from the center. The age is 14*s months,
// so it is proportional to the ink mass; the class sets the age category
// ("nu", "p1", "p2", ...); author and drawn-figure codes are random.
inline std::vector<Sample> synth_dataset(std::size_t class_count, std::size_t per_class, std::size_t rows,
                                         std::size_t cols, std::uint64_t seed)
{
    if (class_count < 2)
        throw ConfigError("synthetic corpus needs at least two classes");
    if (rows < 16 || cols < 16)
        throw ConfigError("synthetic images need at least 16x16 pixels");
    std::vector<Sample> out;
    out.reserve(class_count * per_class);
    const double extent = static_cast<double>(std::min(rows, cols));
    const double half_length = 0.275 * extent;
    const double spacing = 0.1 * extent;
    const double half_width = std::max(1.5, 0.06 * extent);
    for (std::size_t k = 0; k < class_count; ++k) {
        for (std::size_t j = 0; j < per_class; ++j) {
            Rng rng = derive_rng(seed, {k, j});
            const int strokes = 3 + static_cast<int>(std::uniform_int_distribution<int>(0, 5)(rng));
            const double theta = std::numbers::pi * static_cast<double>(k) / static_cast<double>(class_count) +
                                 uniform(rng, -0.05, 0.05);
            const double cy = (static_cast<double>(rows) - 1.0) / 2.0 + uniform(rng, -0.5, 0.5);
            const double cx = (static_cast<double>(cols) - 1.0) / 2.0 + uniform(rng, -0.5, 0.5);
            const double uy = std::sin(theta), ux = std::cos(theta); // along the stroke
            const double ny = ux, nx = -uy;                          // across the strokes

            FeatureMap img(Shape3{1, rows, cols});
            for (int s = 0; s < strokes; ++s) {
                // Slots 0, +1, -1, +2, ... so every sample of a class shares its inner strokes.
                const double slot = s % 2 == 1 ? (s + 1) / 2 : -(s / 2);
                const double offset = slot * spacing;
                const double sy = cy + offset * ny;
                const double sx = cx + offset * nx;
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double dy = static_cast<double>(r) - sy;
                        const double dx = static_cast<double>(c) - sx;
                        const double along = std::clamp(dy * uy + dx * ux, -half_length, half_length);
                        const double py = dy - along * uy, px = dx - along * ux;
                        const double dist = std::sqrt(py * py + px * px);
                        const double ink = std::max(0.0, 1.0 - dist / half_width);
                        double& pix = img.at(0, r, c);
                        pix = std::max(pix, ink);
                    }
            }

            Sample sample{std::move(img), {}};
            LabelRecord& rec = sample.label;
            rec.age_category = k == 0 ? "nu" : "p" + std::to_string(k);
            rec.subject_id = static_cast<int>(k * per_class + j + 1);
            rec.author_code = std::bernoulli_distribution(0.5)(rng) ? 'w' : 's';
            rec.author = default_author_codes().at(rec.author_code);
            rec.age_months = 14 * strokes;
            rec.years = rec.age_months / 12;
            rec.months = rec.age_months % 12;
            rec.drawn_gender = std::bernoulli_distribution(0.5)(rng) ? DrawnGender::Female : DrawnGender::Male;
            rec.extension = "pgm";
            out.push_back(std::move(sample));
        }
    }
    return out;
}

// Every .pgm in dir (sorted by name), labelled from its filename and contracted
// to rows x cols.
inline std::vector<Sample> load_dataset(const std::filesystem::path& dir, std::size_t rows, std::size_t cols,
                                        const AuthorCodeTable& codes = default_author_codes())
{
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw DataError("data directory " + dir.string() + " does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            files.push_back(entry.path());
    if (ec)
        throw DataError("cannot list " + dir.string() + ": " + ec.message());
    if (files.empty())
        throw DataError("no .pgm files in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<Sample> out;
    out.reserve(files.size());
    for (const auto& f : files) {
        LabelRecord rec;
        try {
            rec = parse_filename(f.filename().string(), codes);
        } catch (const ParseError& e) {
            throw DataError(e.what());
        }
        out.push_back({contract_image(read_pgm(f), rows, cols), rec});
    }
    return out;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw DataError("cannot create " + dir.string());
    for (const auto& s : samples)
        write_pgm(dir / render_filename(s.label), s.image);
}

} // namespace ignet
