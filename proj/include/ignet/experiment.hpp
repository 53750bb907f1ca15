#pragma once

// Turns labelled samples into learn-test and validation datasets.
//
// The validation holdout is drawn from the original samples, stratified by
// category, before augmentation. Only learn-test originals are augmented, and
// every augmented copy keeps its original's group id so that copies of one
// drawing never straddle a fold boundary.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "random.hpp"
#include "train.hpp"

namespace ignet {

struct PreparedData {
    Dataset learn_test;
    Dataset validation;
    std::vector<Combination> categories; // category table for strata (and one-hot targets when classifying)
};

namespace detail {
inline Example make_example(const Sample& s, Task task, const OneHotEncoding& enc, std::size_t category)
{
    if (task == Task::Classify)
        return {s.image, one_hot(category, enc.category_count())};
    return {s.image, {regression_target(s.label)}};
}
} // namespace detail

inline PreparedData prepare_data(const std::vector<Sample>& originals, Task task, const EncoderSpec& encoder,
                                 const AugmentConfig& aug, double validation_fraction, std::uint64_t seed)
{
    if (originals.empty())
        throw DataError("no samples to prepare");
    std::vector<LabelRecord> records;
    records.reserve(originals.size());
    for (const auto& s : originals)
        records.push_back(s.label);
    const OneHotEncoding enc = encode_onehot(records, encoder);

    Rng rng = derive_rng(seed, {0x4a1d});
    const HoldoutSplit split = stratified_holdout(enc.class_index, validation_fraction, rng);
    if (split.validation.empty() || split.learn_test.empty())
        throw DataError("validation fraction leaves an empty learn-test or validation set");

    PreparedData out;
    out.categories = enc.categories;
    for (std::size_t i : split.validation) {
        out.validation.examples.push_back(detail::make_example(originals[i], task, enc, enc.class_index[i]));
        out.validation.strata.push_back(enc.class_index[i]);
    }

    const std::uint64_t aug_seed = derive_seed(seed, {0xa06});
    for (std::size_t g = 0; g < split.learn_test.size(); ++g) {
        const std::size_t i = split.learn_test[g];
        Rng aug_rng = derive_rng(aug_seed, {i});
        for (const Sample& copy : augment(originals[i], aug, aug_rng)) {
            out.learn_test.examples.push_back(detail::make_example(copy, task, enc, enc.class_index[i]));
            out.learn_test.strata.push_back(enc.class_index[i]);
            out.learn_test.groups.push_back(g);
        }
    }
    return out;
}

} // namespace ignet
