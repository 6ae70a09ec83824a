#include "plankton/data/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

namespace plankton::data {
namespace {

std::map<int, std::vector<std::size_t>> by_class(const std::vector<int>& class_ids,
                                                 const std::vector<std::size_t>& ids)
{
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t id : ids)
        groups[class_ids[id]].push_back(id);
    return groups;
}

std::vector<std::vector<std::size_t>> stratified_folds(const Manifest& manifest,
                                                       const std::vector<std::size_t>& train, int k,
                                                       std::uint64_t seed)
{
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t next = 0; // rotating start keeps overall fold sizes balanced
    for (auto& [cls, ids] : by_class(manifest.class_ids(), train)) {
        std::shuffle(ids.begin(), ids.end(), rng);
        for (std::size_t id : ids)
            folds[next++ % folds.size()].push_back(id);
    }
    for (auto& f : folds)
        std::sort(f.begin(), f.end());
    return folds;
}

} // namespace

std::vector<std::size_t> SplitPlan::fit_ids(std::size_t fold) const
{
    const auto& held = folds.at(fold);
    std::vector<std::size_t> out;
    std::set_difference(train_ids.begin(), train_ids.end(), held.begin(), held.end(),
                        std::back_inserter(out));
    return out;
}

SplitPlan make_splits(const Manifest& manifest, double ratio, int k, std::uint64_t seed)
{
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split ratio must lie in (0, 1)");
    if (k < 2)
        throw std::invalid_argument("fold count must be at least 2");

    const auto class_ids = manifest.class_ids();
    std::vector<std::size_t> counts(manifest.classes.size());
    for (int c : class_ids)
        ++counts[static_cast<std::size_t>(c)];
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] < static_cast<std::size_t>(k))
            throw std::invalid_argument("class '" + manifest.classes[c] + "' has "
                                        + std::to_string(counts[c]) + " samples, fewer than k="
                                        + std::to_string(k));

    SplitPlan plan;
    plan.seed = seed;
    std::vector<std::size_t> unhinted;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        switch (manifest.entries[i].split) {
        case SplitHint::train: plan.train_ids.push_back(i); break;
        case SplitHint::test: plan.test_ids.push_back(i); break;
        case SplitHint::none: unhinted.push_back(i); break;
        }
    }

    std::mt19937_64 rng(seed);
    for (auto& [cls, ids] : by_class(class_ids, unhinted)) {
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ids.size())));
        plan.train_ids.insert(plan.train_ids.end(), ids.begin(), ids.begin() + n_train);
        plan.test_ids.insert(plan.test_ids.end(), ids.begin() + n_train, ids.end());
    }
    std::sort(plan.train_ids.begin(), plan.train_ids.end());
    std::sort(plan.test_ids.begin(), plan.test_ids.end());
    plan.folds = stratified_folds(manifest, plan.train_ids, k, seed);
    return plan;
}

SplitPlan redraw_folds(const Manifest& manifest, const SplitPlan& plan, int k, std::uint64_t seed)
{
    if (k < 2)
        throw std::invalid_argument("fold count must be at least 2");
    SplitPlan out = plan;
    out.folds = stratified_folds(manifest, plan.train_ids, k, seed);
    return out;
}

nlohmann::json to_json(const SplitPlan& plan)
{
    return {{"seed", plan.seed},
            {"train_ids", plan.train_ids},
            {"test_ids", plan.test_ids},
            {"folds", plan.folds}};
}

SplitPlan split_plan_from_json(const nlohmann::json& j)
{
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.train_ids = j.at("train_ids").get<std::vector<std::size_t>>();
    plan.test_ids = j.at("test_ids").get<std::vector<std::size_t>>();
    plan.folds = j.at("folds").get<std::vector<std::vector<std::size_t>>>();
    return plan;
}

} // namespace plankton::data
