#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace plankton::supervised {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RidgeModel
{
    Matrix support;      // n x Z
    Matrix dual;         // n x C
    Eigen::RowVectorXd offset; // per-class target mean, zero unless centered
    double lambda = 1.0;
    double gamma = 1.0;
    std::size_t n_classes = 0;
};

struct RidgeOptions
{
    bool center_targets = false;
};

/// K_ij = exp(-gamma ||a_i - b_j||^2)
Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double gamma);

/// One-hot rows for labels in [0, n_classes).
Matrix one_hot(std::span<const int> labels, std::size_t n_classes);

/// Solves (K + lambda I) alpha = Y with a Cholesky factorization.
RidgeModel ridge_fit(const Matrix& x, std::span<const int> labels, std::size_t n_classes, double lambda,
                     double gamma, const RidgeOptions& options = {});

Matrix ridge_scores(const RidgeModel& model, const Matrix& x);
/// Argmax of the scores, ties to the lowest class id.
std::vector<int> ridge_predict(const RidgeModel& model, const Matrix& x);

/// log10-spaced grid from 10^lo to 10^hi inclusive.
std::vector<double> log_grid(int lo, int hi);

struct GridCell
{
    double lambda;
    double gamma;
    double accuracy; // mean validation accuracy over folds
};

struct GridResult
{
    double lambda;
    double gamma;
    double accuracy;
    std::vector<GridCell> cells;
};

/// For every (lambda, gamma) pair: fit on all rows outside a fold, score on
/// the fold, average over folds. Ties go to the largest lambda, then the
/// smallest gamma. `folds` hold row indices into x.
GridResult grid_search(const Matrix& x, std::span<const int> labels, std::size_t n_classes,
                       const std::vector<double>& lambdas, const std::vector<double>& gammas,
                       const std::vector<std::vector<std::size_t>>& folds, const RidgeOptions& options = {});

nlohmann::json to_json(const GridResult& r);

} // namespace plankton::supervised
