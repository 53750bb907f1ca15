#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ignet/data.hpp"
#include "test_util.hpp"

using namespace ignet;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("ignet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Index of the class centroid closest to each sample, by squared distance.
std::vector<std::size_t> nearest_centroid(const std::vector<Sample>& samples, const std::vector<std::size_t>& labels,
                                          std::size_t classes)
{
    const std::size_t n = samples.front().image.size();
    std::vector<std::vector<double>> centroid(classes, std::vector<double>(n, 0.0));
    std::vector<double> count(classes, 0.0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        for (std::size_t i = 0; i < n; ++i)
            centroid[labels[s]][i] += samples[s].image.values[i];
        count[labels[s]] += 1.0;
    }
    for (std::size_t k = 0; k < classes; ++k)
        for (auto& v : centroid[k])
            v /= count[k];
    std::vector<std::size_t> out;
    for (const auto& s : samples) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < classes; ++k) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                d += (s.image.values[i] - centroid[k][i]) * (s.image.values[i] - centroid[k][i]);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        out.push_back(best);
    }
    return out;
}

} // namespace

TEST(ParseFilename, FirstExample)
{
    const LabelRecord r = parse_filename("p3-67w-6.7f.jpeg");
    EXPECT_EQ(r.age_category, "p3");
    EXPECT_EQ(r.subject_id, 67);
    EXPECT_EQ(r.author.gender, AuthorGender::Girl);
    EXPECT_FALSE(r.author.self_portrait);
    EXPECT_EQ(r.years, 6);
    EXPECT_EQ(r.months, 7);
    EXPECT_EQ(r.age_months, 79);
    EXPECT_EQ(r.drawn_gender, DrawnGender::Female);
    EXPECT_EQ(r.extension, "jpeg");
    EXPECT_EQ(regression_target(r), 79.0);
}

TEST(ParseFilename, SecondExample)
{
    const LabelRecord r = parse_filename("/some/dir/nu-21s-4.5m.jpeg");
    EXPECT_EQ(r.age_category, "nu");
    EXPECT_EQ(r.subject_id, 21);
    EXPECT_EQ(r.author.gender, AuthorGender::Boy);
    EXPECT_TRUE(r.author.self_portrait);
    EXPECT_EQ(r.age_months, 53);
    EXPECT_EQ(r.drawn_gender, DrawnGender::Male);
    EXPECT_EQ(regression_target(r), 53.0);
}

TEST(ParseFilename, Malformed)
{
    EXPECT_THROW(parse_filename("portrait.jpeg"), ParseError);
    EXPECT_THROW(parse_filename("p3-67w-6.7x.jpeg"), ParseError);
    EXPECT_THROW(parse_filename("p3-67w-6.13f.jpeg"), ParseError);
    EXPECT_THROW(parse_filename("p3-w-6.7f.jpeg"), ParseError);
    EXPECT_THROW(parse_filename("p3-67w-6.7f."), ParseError);
    try {
        parse_filename("p3-67q-6.7f.jpeg");
        FAIL();
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("author code"), std::string::npos) << msg;
        EXPECT_NE(msg.find("s, w"), std::string::npos) << msg;
    }
}

TEST(ParseFilename, CustomCodeTableAndRoundTrip)
{
    AuthorCodeTable codes = default_author_codes();
    codes['b'] = {AuthorGender::Boy, false};
    const LabelRecord r = parse_filename("p1-5b-10.0m.pgm", codes);
    EXPECT_EQ(r.author.gender, AuthorGender::Boy);
    EXPECT_FALSE(r.author.self_portrait);
    EXPECT_EQ(render_filename(r), "p1-5b-10.0m.pgm");
    EXPECT_EQ(parse_filename(render_filename(r), codes), r);
}

TEST(Contract, AreaAverage)
{
    const FeatureMap out = contract_image(FeatureMap({1, 2, 2}, {0, 1, 1, 0}), 1, 1);
    EXPECT_EQ(out.values, (std::vector<double>{0.5}));
}

TEST(Contract, SameSizeIsCopy)
{
    Rng rng(1);
    const FeatureMap img = ignet::testing::random_map({1, 5, 7}, rng, 0, 1);
    EXPECT_EQ(contract_image(img, 5, 7).values, img.values);
}

TEST(Contract, CorpusDimensionsAndMean)
{
    Rng rng(2);
    const FeatureMap img = ignet::testing::random_map({1, 600, 800}, rng, 0, 1);
    const FeatureMap out = contract_image(img, 36, 58);
    EXPECT_EQ(out.shape, (Shape3{1, 36, 58}));
    double a = 0.0, b = 0.0;
    for (double v : img.values)
        a += v;
    for (double v : out.values)
        b += v;
    EXPECT_NEAR(a / static_cast<double>(img.size()), b / static_cast<double>(out.size()), 1e-12);
    for (double v : out.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-12);
    }
}

TEST(Augment, IdentityTransformCopies)
{
    AugmentConfig cfg;
    cfg.rotation_max_deg = 0;
    cfg.stretch_min = cfg.stretch_max = 1.0;
    cfg.noise_level = 0;
    cfg.multiplier = 4;
    Rng rng(3);
    const Sample s{ignet::testing::random_map({1, 10, 10}, rng, 0, 1), parse_filename("p3-67w-6.7f.pgm")};
    const auto out = augment(s, cfg, rng);
    ASSERT_EQ(out.size(), 4u);
    for (const auto& c : out) {
        EXPECT_EQ(c.image.values, s.image.values);
        EXPECT_EQ(c.label, s.label);
    }
}

TEST(Augment, ExactNoiseCount)
{
    AugmentConfig cfg;
    cfg.rotation_max_deg = 0;
    cfg.stretch_min = cfg.stretch_max = 1.0;
    cfg.noise_level = 0.3;
    cfg.noise_fraction = 0.1;
    cfg.multiplier = 2;
    // A mid-gray image keeps every perturbation inside [0, 1], so each noised pixel differs.
    const Sample s{FeatureMap({1, 10, 10}, 0.5), {}};
    Rng rng(4);
    const auto out = augment(s, cfg, rng);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < s.image.size(); ++i)
        differ += out[1].image.values[i] != s.image.values[i];
    EXPECT_EQ(differ, 10u);
}

TEST(Augment, MultiplierAndRange)
{
    const auto base = synth_dataset(3, 4, 20, 24, 5);
    const auto grown = augment_all(base, AugmentConfig{}, 6);
    EXPECT_EQ(grown.size(), 10 * base.size());
    for (const auto& s : grown)
        for (double v : s.image.values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    EXPECT_EQ(grown[0].image.values, base[0].image.values);
    EXPECT_NE(grown[1].image.values, base[0].image.values);
    EXPECT_EQ(augment_all(base, AugmentConfig{}, 6)[7].image.values, grown[7].image.values);
    AugmentConfig bad;
    bad.multiplier = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Augment, SmallRotationKeepsInkMass)
{
    const auto base = synth_dataset(2, 3, 32, 32, 7);
    AugmentConfig cfg;
    cfg.noise_level = 0;
    cfg.stretch_min = cfg.stretch_max = 1.0;
    const auto grown = augment_all(base, cfg, 8);
    for (std::size_t i = 0; i < grown.size(); ++i) {
        double a = 0.0, b = 0.0;
        for (double v : base[i / 10].image.values)
            a += v;
        for (double v : grown[i].image.values)
            b += v;
        EXPECT_NEAR(b / a, 1.0, 0.05);
    }
}

TEST(OneHot, BinaryGroup)
{
    const std::vector<LabelRecord> recs{parse_filename("p3-1w-6.7f.pgm"), parse_filename("p3-2w-6.7m.pgm")};
    const auto enc = encode_onehot(recs, {{FactorGroup::WhoIsDrawn}});
    EXPECT_EQ(enc.category_count(), 2u);
    EXPECT_EQ(enc.vectors[0], (std::vector<double>{1, 0}));
    EXPECT_EQ(enc.vectors[1], (std::vector<double>{0, 1}));
}

TEST(OneHot, DistinctCombinations)
{
    const std::vector<LabelRecord> recs{parse_filename("p1-1w-6.7f.pgm"), parse_filename("p1-2w-6.7m.pgm"),
                                        parse_filename("p1-3w-5.1f.pgm")};
    const auto enc = encode_onehot(recs, {{FactorGroup::AgeCategory, FactorGroup::WhoIsDrawn}});
    EXPECT_EQ(enc.category_count(), 2u);
    EXPECT_EQ(enc.vectors[0], enc.vectors[2]);
    EXPECT_NE(enc.vectors[0], enc.vectors[1]);
    EXPECT_EQ(join_combination(enc.categories[0]), "p1,f");
}

TEST(OneHot, GroupsAndTables)
{
    const LabelRecord r = parse_filename("nu-21s-4.5m.pgm");
    EXPECT_EQ(factor_value(r, FactorGroup::Age), "4.5");
    EXPECT_EQ(factor_value(r, FactorGroup::AgeInMonths), "53");
    EXPECT_EQ(factor_value(r, FactorGroup::WhoDrew), "s");
    EXPECT_EQ(parse_factor_group("who_is_drawn"), FactorGroup::WhoIsDrawn);
    EXPECT_THROW(parse_factor_group("hair"), ConfigError);
    EXPECT_THROW(encode_onehot({r}, {}), ConfigError);
    EXPECT_THROW(encode_with_table({r}, {{FactorGroup::WhoDrew}}, {{"w"}}), DataError);
    const auto four = encode_onehot({r, parse_filename("p3-67w-6.7f.pgm")},
                                    {{FactorGroup::Age, FactorGroup::WhoDrew, FactorGroup::WhoIsDrawn,
                                      FactorGroup::AgeCategory}});
    EXPECT_EQ(four.category_count(), 2u);
}

TEST(Synth, DeterministicAndCounted)
{
    const auto a = synth_dataset(3, 40, 36, 58, 11);
    const auto b = synth_dataset(3, 40, 36, 58, 11);
    ASSERT_EQ(a.size(), 120u);
    std::set<int> ids;
    std::map<std::string, int> per_category;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].image.values, b[i].image.values);
        EXPECT_EQ(a[i].label, b[i].label);
        ids.insert(a[i].label.subject_id);
        ++per_category[a[i].label.age_category];
        EXPECT_EQ(a[i].label.age_months % 14, 0);
        EXPECT_GE(a[i].label.age_months, 42);
        EXPECT_LE(a[i].label.age_months, 112);
    }
    EXPECT_EQ(ids.size(), 120u);
    EXPECT_EQ(per_category, (std::map<std::string, int>{{"nu", 40}, {"p1", 40}, {"p2", 40}}));
    EXPECT_THROW(synth_dataset(1, 4, 36, 58, 1), ConfigError);
}

TEST(Synth, SeparableByNearestCentroid)
{
    const auto data = synth_dataset(3, 40, 36, 58, 12);
    const auto aug = augment_all(data, AugmentConfig{}, 13);
    for (const auto* set : {&data, &aug}) {
        std::vector<LabelRecord> recs;
        for (const auto& s : *set)
            recs.push_back(s.label);
        const auto enc = encode_onehot(recs, {{FactorGroup::AgeCategory}});
        const auto guess = nearest_centroid(*set, enc.class_index, enc.category_count());
        EXPECT_EQ(guess, enc.class_index);
    }
}

TEST(Pgm, RoundTripAndErrors)
{
    FeatureMap img({1, 3, 4});
    for (std::size_t i = 0; i < img.size(); ++i)
        img.values[i] = static_cast<double>(i * 20) / 255.0;
    for (bool binary : {true, false}) {
        const FeatureMap back = decode_pgm(encode_pgm(img, binary));
        ASSERT_EQ(back.shape, img.shape);
        for (std::size_t i = 0; i < img.size(); ++i)
            EXPECT_NEAR(back.values[i], img.values[i], 1e-15);
    }
    EXPECT_EQ(decode_pgm("P2\n# note\n2 1\n10\n0 10\n").values, (std::vector<double>{0.0, 1.0}));
    EXPECT_THROW(decode_pgm("P6\n1 1\n255\nabc"), DataError);
    EXPECT_THROW(decode_pgm("P5\n2 2\n255\n\x01"), DataError);
    EXPECT_THROW(read_pgm("/nonexistent/file.pgm"), DataError);
}

TEST(Dataset, WriteAndLoad)
{
    const auto dir = scratch_dir("load");
    const auto data = synth_dataset(2, 3, 20, 20, 14);
    write_dataset(dir, data);
    std::ofstream(dir / "notes.txt") << "ignored";
    const auto loaded = load_dataset(dir, 10, 10);
    ASSERT_EQ(loaded.size(), 6u);
    std::set<std::string> names;
    for (const auto& s : loaded) {
        EXPECT_EQ(s.image.shape, (Shape3{1, 10, 10}));
        names.insert(render_filename(s.label));
    }
    for (const auto& s : data)
        EXPECT_TRUE(names.count(render_filename(s.label)));

    std::ofstream(dir / "broken.pgm") << "P5\n1 1\n255\n\x01";
    EXPECT_THROW(load_dataset(dir, 10, 10), DataError);
    EXPECT_THROW(load_dataset(dir / "missing", 10, 10), DataError);
    std::filesystem::remove_all(dir);
}
