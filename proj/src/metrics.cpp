#include "plankton/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace plankton::metrics {

std::string_view overlap_mode_name(OverlapMode m)
{
    switch (m) {
    case OverlapMode::collisions: return "collisions";
    case OverlapMode::pairs: return "pairs";
    case OverlapMode::distinct: return "distinct";
    }
    return "?";
}

OverlapMode parse_overlap_mode(std::string_view s)
{
    if (s == "collisions")
        return OverlapMode::collisions;
    if (s == "pairs")
        return OverlapMode::pairs;
    if (s == "distinct")
        return OverlapMode::distinct;
    throw std::invalid_argument("unknown overlap mode '" + std::string(s) + "'");
}

std::string_view overlap_direction_name(OverlapDirection d)
{
    return d == OverlapDirection::class_majority ? "class_majority" : "cluster_majority";
}

OverlapDirection parse_overlap_direction(std::string_view s)
{
    if (s == "class_majority")
        return OverlapDirection::class_majority;
    if (s == "cluster_majority")
        return OverlapDirection::cluster_majority;
    throw std::invalid_argument("unknown overlap direction '" + std::string(s) + "'");
}

namespace {

void check_lengths(std::span<const int> a, std::span<const int> b, const char* what)
{
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs "
                                    + std::to_string(b.size()) + ")");
    if (a.empty())
        throw std::invalid_argument(std::string(what) + ": empty assignment");
}

std::size_t index_of(const std::vector<int>& sorted, int id)
{
    return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), id) - sorted.begin());
}

int count_collisions(const std::vector<std::size_t>& targets, std::size_t n_sources, OverlapMode mode)
{
    std::map<std::size_t, int> hits;
    for (const auto t : targets)
        ++hits[t];
    int total = 0;
    switch (mode) {
    case OverlapMode::collisions:
        for (const auto& [_, h] : hits)
            total += std::max(0, h - 1);
        break;
    case OverlapMode::pairs:
        for (const auto& [_, h] : hits)
            total += h * (h - 1) / 2;
        break;
    case OverlapMode::distinct:
        total = static_cast<int>(n_sources) - static_cast<int>(hits.size());
        break;
    }
    return total;
}

} // namespace

Contingency contingency(std::span<const int> clusters, std::span<const int> classes)
{
    check_lengths(clusters, classes, "contingency");
    Contingency c;
    c.cluster_ids.assign(clusters.begin(), clusters.end());
    std::ranges::sort(c.cluster_ids);
    c.cluster_ids.erase(std::unique(c.cluster_ids.begin(), c.cluster_ids.end()), c.cluster_ids.end());
    c.class_ids.assign(classes.begin(), classes.end());
    std::ranges::sort(c.class_ids);
    c.class_ids.erase(std::unique(c.class_ids.begin(), c.class_ids.end()), c.class_ids.end());
    c.counts.assign(c.cluster_ids.size(), std::vector<std::size_t>(c.class_ids.size(), 0));
    for (std::size_t i = 0; i < clusters.size(); ++i)
        ++c.counts[index_of(c.cluster_ids, clusters[i])][index_of(c.class_ids, classes[i])];
    c.total = clusters.size();
    return c;
}

double purity(std::span<const int> clusters, std::span<const int> classes)
{
    const Contingency c = contingency(clusters, classes);
    std::size_t hits = 0;
    for (const auto& row : c.counts)
        hits += *std::ranges::max_element(row);
    return static_cast<double>(hits) / static_cast<double>(c.total);
}

int overlaps(std::span<const int> clusters, std::span<const int> classes, const OverlapOptions& options)
{
    const Contingency c = contingency(clusters, classes);
    std::vector<std::size_t> targets;
    if (options.direction == OverlapDirection::class_majority) {
        // class j -> cluster with the most of its samples, ties to the lowest cluster id
        for (std::size_t j = 0; j < c.class_ids.size(); ++j) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < c.cluster_ids.size(); ++k)
                if (c.counts[k][j] > c.counts[best][j])
                    best = k;
            targets.push_back(best);
        }
        return count_collisions(targets, c.class_ids.size(), options.mode);
    }
    // cluster k -> its majority class, ties to the lowest class id
    for (const auto& row : c.counts)
        targets.push_back(static_cast<std::size_t>(std::ranges::max_element(row) - row.begin()));
    return count_collisions(targets, c.cluster_ids.size(), options.mode);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels)
{
    check_lengths(predictions, labels, "accuracy");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double MetricSummary::min() const { return runs.empty() ? 0.0 : *std::ranges::min_element(runs); }
double MetricSummary::max() const { return runs.empty() ? 0.0 : *std::ranges::max_element(runs); }

MetricSummary aggregate(std::span<const double> runs)
{
    if (runs.empty())
        throw std::invalid_argument("aggregate: no runs");
    MetricSummary s;
    s.runs.assign(runs.begin(), runs.end());
    const double n = static_cast<double>(runs.size());
    s.mean = std::accumulate(runs.begin(), runs.end(), 0.0) / n;
    if (s.min() == s.max()) {
        s.mean = s.min();
        return s; // exact zero spread
    }
    double ss = 0.0;
    for (const double r : runs)
        ss += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(ss / n);
    // keep the mean inside [min, max] despite rounding
    s.mean = std::clamp(s.mean, s.min(), s.max());
    return s;
}

nlohmann::json to_json(const MetricSummary& s, std::string_view metric, std::string_view config_hash)
{
    return {{"metric", metric},
            {"mean", s.mean},
            {"std", s.std},
            {"std_kind", "population"},
            {"runs", s.runs},
            {"config_hash", config_hash}};
}

MetricSummary metric_summary_from_json(const nlohmann::json& j)
{
    MetricSummary s;
    s.mean = j.at("mean").get<double>();
    s.std = j.at("std").get<double>();
    s.runs = j.at("runs").get<std::vector<double>>();
    return s;
}

} // namespace plankton::metrics
