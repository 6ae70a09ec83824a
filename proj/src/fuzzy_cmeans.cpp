#include "plankton/cluster/fuzzy_cmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace plankton::cluster {

void FuzzyConfig::validate() const
{
    if (n_clusters < 2)
        throw std::invalid_argument("fuzzy c-means needs at least 2 clusters");
    if (!(m > 1.0))
        throw std::invalid_argument("fuzzifier m must exceed 1");
    if (!(tol > 0.0))
        throw std::invalid_argument("tolerance must be positive");
    if (max_iter < 1)
        throw std::invalid_argument("max_iter must be at least 1");
}

Matrix random_memberships(std::size_t n, std::size_t k, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Matrix u(n, k);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        for (Eigen::Index j = 0; j < u.cols(); ++j)
            u(i, j) = dist(rng) + 1e-12;
        u.row(i) /= u.row(i).sum();
    }
    return u;
}

Matrix centroids_from(const Matrix& points, const Matrix& memberships, double m)
{
    const Matrix w = memberships.array().pow(m).matrix(); // n x k
    Matrix c = w.transpose() * points;                    // k x Z
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
        const double mass = w.col(j).sum();
        if (mass > 0.0)
            c.row(j) /= mass;
    }
    return c;
}

namespace {

Matrix squared_distances(const Matrix& points, const Matrix& centroids)
{
    Matrix d(points.rows(), centroids.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        for (Eigen::Index j = 0; j < centroids.rows(); ++j)
            d(i, j) = (points.row(i) - centroids.row(j)).squaredNorm();
    return d;
}

} // namespace

Matrix assign(const Matrix& centroids, const Matrix& points, double m)
{
    if (points.cols() != centroids.cols())
        throw std::invalid_argument("assign: points have dimension " + std::to_string(points.cols())
                                    + ", centroids " + std::to_string(centroids.cols()));
    if (!(m > 1.0))
        throw std::invalid_argument("fuzzifier m must exceed 1");
    const Matrix d2 = squared_distances(points, centroids);
    const double power = 1.0 / (m - 1.0);
    Matrix u = Matrix::Zero(points.rows(), centroids.rows());
    for (Eigen::Index i = 0; i < d2.rows(); ++i) {
        Eigen::Index nearest = 0;
        const double dmin = d2.row(i).minCoeff(&nearest);
        if (dmin == 0.0) {
            u(i, nearest) = 1.0;
            continue;
        }
        // (d_min / d_ij)^(2/(m-1)) stays in (0, 1], avoiding overflow as m -> 1
        double total = 0.0;
        for (Eigen::Index j = 0; j < d2.cols(); ++j) {
            u(i, j) = std::pow(dmin / d2(i, j), power);
            total += u(i, j);
        }
        u.row(i) /= total;
    }
    return u;
}

double objective(const Matrix& points, const Matrix& centroids, const Matrix& memberships, double m)
{
    const Matrix d2 = squared_distances(points, centroids);
    return (memberships.array().pow(m) * d2.array()).sum();
}

ClusterModel fit(const Matrix& points, const FuzzyConfig& config, const std::optional<Matrix>& initial)
{
    config.validate();
    const auto n = static_cast<std::size_t>(points.rows());
    const std::size_t k = config.n_clusters;
    if (n < k)
        throw std::invalid_argument("fuzzy c-means: " + std::to_string(n) + " points for " + std::to_string(k)
                                    + " clusters");
    if (!points.allFinite())
        throw std::invalid_argument("fuzzy c-means: non-finite input");

    ClusterModel model;
    model.config = config;
    Matrix u = initial ? *initial : random_memberships(n, k, config.seed);
    if (static_cast<std::size_t>(u.rows()) != n || static_cast<std::size_t>(u.cols()) != k)
        throw std::invalid_argument("fuzzy c-means: initial memberships must be n x k");

    bool identical = true;
    for (Eigen::Index i = 1; i < points.rows() && identical; ++i)
        identical = points.row(i) == points.row(0);
    if (identical) {
        model.degenerate = true;
        model.centroids = points.row(0).replicate(static_cast<Eigen::Index>(k), 1);
        model.memberships = Matrix::Constant(points.rows(), static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
        return model;
    }

    Matrix c = centroids_from(points, u, config.m);
    for (int it = 1; it <= config.max_iter; ++it) {
        u = assign(c, points, config.m);
        Matrix next = centroids_from(points, u, config.m);
        double shift = 0.0;
        for (Eigen::Index j = 0; j < c.rows(); ++j)
            shift = std::max(shift, (next.row(j) - c.row(j)).norm());
        c = std::move(next);
        model.objective_history.push_back(objective(points, c, u, config.m));
        model.iterations_run = it;
        model.final_shift = shift;
        if (shift <= config.tol)
            break;
    }
    model.centroids = std::move(c);
    model.memberships = std::move(u);
    return model;
}

std::vector<int> harden(const Matrix& memberships)
{
    std::vector<int> labels(static_cast<std::size_t>(memberships.rows()));
    for (Eigen::Index i = 0; i < memberships.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < memberships.cols(); ++j)
            if (memberships(i, j) > memberships(i, best))
                best = j;
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return labels;
}

Matrix to_matrix(const std::vector<std::vector<float>>& rows)
{
    if (rows.empty())
        return Matrix(0, 0);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size())
            throw std::invalid_argument("to_matrix: ragged rows");
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

nlohmann::json to_json(const ClusterModel& model)
{
    std::vector<std::vector<double>> centroids;
    for (Eigen::Index j = 0; j < model.centroids.rows(); ++j)
        centroids.emplace_back(model.centroids.row(j).begin(), model.centroids.row(j).end());
    return {{"config",
             {{"n_clusters", model.config.n_clusters},
              {"m", model.config.m},
              {"tol", model.config.tol},
              {"max_iter", model.config.max_iter},
              {"seed", model.config.seed}}},
            {"centroids", centroids},
            {"iterations", model.iterations_run},
            {"final_shift", model.final_shift},
            {"degenerate", model.degenerate}};
}

ClusterModel cluster_model_from_json(const nlohmann::json& j)
{
    ClusterModel model;
    const auto& c = j.at("config");
    model.config.n_clusters = c.at("n_clusters").get<std::size_t>();
    model.config.m = c.at("m").get<double>();
    model.config.tol = c.at("tol").get<double>();
    model.config.max_iter = c.at("max_iter").get<int>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    const auto rows = j.at("centroids").get<std::vector<std::vector<double>>>();
    model.centroids = Matrix(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            model.centroids(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    model.iterations_run = j.at("iterations").get<int>();
    model.final_shift = j.at("final_shift").get<double>();
    model.degenerate = j.value("degenerate", false);
    return model;
}

void write_labels_csv(std::ostream& out, const std::vector<std::string>& ids, const std::vector<int>& labels)
{
    if (ids.size() != labels.size())
        throw std::invalid_argument("write_labels_csv: id and label counts differ");
    out << "source_id,cluster\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
        out << ids[i] << ',' << labels[i] << '\n';
}

} // namespace plankton::cluster
