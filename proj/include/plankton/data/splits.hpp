#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "plankton/data/manifest.hpp"

namespace plankton::data {

/// Indices refer to manifest entry positions. All lists are sorted.
struct SplitPlan
{
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> test_ids;
    std::vector<std::vector<std::size_t>> folds; // partition of train_ids
    std::uint64_t seed = 0;

    /// train_ids minus folds[fold].
    std::vector<std::size_t> fit_ids(std::size_t fold) const;

    friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Stratified train/test split plus stratified k-fold partition of train.
/// Entries carrying a split hint keep it; unhinted entries are split per
/// class at `ratio`.
SplitPlan make_splits(const Manifest& manifest, double ratio, int k, std::uint64_t seed);

/// Keeps train/test, redraws the k folds from `seed`.
SplitPlan redraw_folds(const Manifest& manifest, const SplitPlan& plan, int k, std::uint64_t seed);

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const nlohmann::json& j);

} // namespace plankton::data
