#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace plankton::metrics {

/// How collisions on a cluster are counted.
///   collisions: sum over clusters of max(0, classes mapped - 1)   (default)
///   pairs:      sum over clusters of C(classes mapped, 2)
///   distinct:   #classes - #distinct target clusters
enum class OverlapMode { collisions, pairs, distinct };

/// class_majority maps every class to the cluster holding most of its samples.
/// cluster_majority maps every cluster to its most represented class and
/// counts collisions among classes.
enum class OverlapDirection { class_majority, cluster_majority };

std::string_view overlap_mode_name(OverlapMode m);
OverlapMode parse_overlap_mode(std::string_view s);
std::string_view overlap_direction_name(OverlapDirection d);
OverlapDirection parse_overlap_direction(std::string_view s);

struct OverlapOptions
{
    OverlapMode mode = OverlapMode::collisions;
    OverlapDirection direction = OverlapDirection::class_majority;
};

/// Contingency counts [cluster][class] over dense ids.
struct Contingency
{
    std::vector<int> cluster_ids; // sorted distinct cluster ids
    std::vector<int> class_ids;   // sorted distinct class ids
    std::vector<std::vector<std::size_t>> counts;
    std::size_t total = 0;
};

Contingency contingency(std::span<const int> clusters, std::span<const int> classes);

/// (1/N) sum_k max_j |w_k intersect c_j|
double purity(std::span<const int> clusters, std::span<const int> classes);

int overlaps(std::span<const int> clusters, std::span<const int> classes, const OverlapOptions& options = {});

double accuracy(std::span<const int> predictions, std::span<const int> labels);

struct MetricSummary
{
    double mean = 0.0;
    double std = 0.0; // population
    std::vector<double> runs;

    double min() const;
    double max() const;
};

MetricSummary aggregate(std::span<const double> runs);

/// {metric, mean, std, std_kind, runs, config_hash}
nlohmann::json to_json(const MetricSummary& s, std::string_view metric, std::string_view config_hash);
MetricSummary metric_summary_from_json(const nlohmann::json& j);

} // namespace plankton::metrics
