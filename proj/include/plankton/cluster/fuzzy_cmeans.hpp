#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace plankton::cluster {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FuzzyConfig
{
    std::size_t n_clusters = 2;
    double m = 2.0;
    double tol = 1e-5;
    int max_iter = 300;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ClusterModel
{
    FuzzyConfig config;
    Matrix centroids;   // k x Z
    Matrix memberships; // n x k, rows sum to 1
    int iterations_run = 0;
    double final_shift = 0.0;
    std::vector<double> objective_history; // J_m after every iteration
    bool degenerate = false;               // all points coincide
};

/// Seeded random memberships with rows normalized to 1.
Matrix random_memberships(std::size_t n, std::size_t k, std::uint64_t seed);

/// Alternating fuzzy c-means updates until the largest centroid shift is at
/// most `tol` or `max_iter` is reached. `initial` overrides the seeded
/// random start.
ClusterModel fit(const Matrix& points, const FuzzyConfig& config, const std::optional<Matrix>& initial = std::nullopt);

/// Memberships of `points` for frozen centroids. A point at distance zero
/// from a centroid gets a one-hot row.
Matrix assign(const Matrix& centroids, const Matrix& points, double m);
inline Matrix assign(const ClusterModel& model, const Matrix& points, double m)
{
    return assign(model.centroids, points, m);
}

/// Weighted centroids sum_i u_ij^m x_i / sum_i u_ij^m.
Matrix centroids_from(const Matrix& points, const Matrix& memberships, double m);

/// J_m = sum_ij u_ij^m ||x_i - c_j||^2
double objective(const Matrix& points, const Matrix& centroids, const Matrix& memberships, double m);

/// Row-wise argmax, ties to the lowest cluster index.
std::vector<int> harden(const Matrix& memberships);

Matrix to_matrix(const std::vector<std::vector<float>>& rows);

nlohmann::json to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& j);

/// `source_id,cluster` rows.
void write_labels_csv(std::ostream& out, const std::vector<std::string>& ids, const std::vector<int>& labels);

} // namespace plankton::cluster
