#include "plankton/supervised/ridge.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "plankton/metrics/metrics.hpp"

namespace plankton::supervised {

Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double gamma)
{
    if (a.cols() != b.cols())
        throw std::invalid_argument("gaussian_kernel: dimension mismatch (" + std::to_string(a.cols()) + " vs "
                                    + std::to_string(b.cols()) + ")");
    Matrix k(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j)
            k(i, j) = std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
    return k;
}

Matrix one_hot(std::span<const int> labels, std::size_t n_classes)
{
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes)
            throw std::invalid_argument("label " + std::to_string(labels[i]) + " outside [0, "
                                        + std::to_string(n_classes) + ")");
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return y;
}

RidgeModel ridge_fit(const Matrix& x, std::span<const int> labels, std::size_t n_classes, double lambda,
                     double gamma, const RidgeOptions& options)
{
    if (x.rows() < 1)
        throw std::invalid_argument("ridge_fit: no training rows");
    if (static_cast<std::size_t>(x.rows()) != labels.size())
        throw std::invalid_argument("ridge_fit: " + std::to_string(x.rows()) + " rows but "
                                    + std::to_string(labels.size()) + " labels");
    if (!(lambda > 0.0) || !(gamma > 0.0))
        throw std::invalid_argument("ridge_fit: lambda and gamma must be positive");

    RidgeModel model;
    model.support = x;
    model.lambda = lambda;
    model.gamma = gamma;
    model.n_classes = n_classes;
    Matrix y = one_hot(labels, n_classes);
    model.offset = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(n_classes));
    if (options.center_targets) {
        model.offset = y.colwise().mean();
        y.rowwise() -= model.offset;
    }
    Matrix a = gaussian_kernel(x, x, gamma);
    a.diagonal().array() += lambda;
    const Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Matrix>(a, Eigen::EigenvaluesOnly).eigenvalues();
        std::ostringstream msg;
        msg << "ridge_fit: Cholesky failed for lambda=" << lambda << " gamma=" << gamma
            << " (eigenvalues in [" << ev.minCoeff() << ", " << ev.maxCoeff() << "])";
        throw std::runtime_error(msg.str());
    }
    model.dual = llt.solve(y);
    return model;
}

Matrix ridge_scores(const RidgeModel& model, const Matrix& x)
{
    if (x.cols() != model.support.cols())
        throw std::invalid_argument("ridge_predict: expected dimension " + std::to_string(model.support.cols())
                                    + ", got " + std::to_string(x.cols()));
    Matrix s = gaussian_kernel(x, model.support, model.gamma) * model.dual;
    s.rowwise() += model.offset;
    return s;
}

std::vector<int> ridge_predict(const RidgeModel& model, const Matrix& x)
{
    const Matrix s = ridge_scores(model, x);
    std::vector<int> out(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < s.cols(); ++j)
            if (s(i, j) > s(i, best))
                best = j;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

std::vector<double> log_grid(int lo, int hi)
{
    std::vector<double> g;
    for (int e = lo; e <= hi; ++e)
        g.push_back(std::pow(10.0, e));
    return g;
}

namespace {

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& rows)
{
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

} // namespace

GridResult grid_search(const Matrix& x, std::span<const int> labels, std::size_t n_classes,
                       const std::vector<double>& lambdas, const std::vector<double>& gammas,
                       const std::vector<std::vector<std::size_t>>& folds, const RidgeOptions& options)
{
    if (lambdas.empty() || gammas.empty())
        throw std::invalid_argument("grid_search: empty grid");
    if (folds.empty())
        throw std::invalid_argument("grid_search: no folds");

    // training/validation index sets are independent of the grid cell
    struct Split
    {
        std::vector<std::size_t> fit, val;
        std::vector<int> fit_labels, val_labels;
    };
    std::vector<Split> splits;
    for (const auto& fold : folds) {
        std::vector<bool> held(labels.size(), false);
        for (const auto i : fold) {
            if (i >= labels.size())
                throw std::invalid_argument("grid_search: fold index out of range");
            held[i] = true;
        }
        Split s;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            (held[i] ? s.val : s.fit).push_back(i);
            (held[i] ? s.val_labels : s.fit_labels).push_back(labels[i]);
        }
        if (s.fit.empty() || s.val.empty())
            throw std::invalid_argument("grid_search: a fold leaves no training or validation rows");
        splits.push_back(std::move(s));
    }

    GridResult result{0.0, 0.0, -1.0, {}};
    for (const double lambda : lambdas) {
        for (const double gamma : gammas) {
            double acc = 0.0;
            for (const auto& s : splits) {
                const RidgeModel m = ridge_fit(take_rows(x, s.fit), s.fit_labels, n_classes, lambda, gamma, options);
                acc += metrics::accuracy(ridge_predict(m, take_rows(x, s.val)), s.val_labels);
            }
            acc /= static_cast<double>(splits.size());
            result.cells.push_back({lambda, gamma, acc});
            const bool better = acc > result.accuracy
                                || (acc == result.accuracy
                                    && (lambda > result.lambda || (lambda == result.lambda && gamma < result.gamma)));
            if (better) {
                result.lambda = lambda;
                result.gamma = gamma;
                result.accuracy = acc;
            }
        }
    }
    return result;
}

nlohmann::json to_json(const GridResult& r)
{
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells)
        cells.push_back({{"lambda", c.lambda}, {"gamma", c.gamma}, {"accuracy", c.accuracy}});
    return {{"lambda", r.lambda}, {"gamma", r.gamma}, {"validation_accuracy", r.accuracy}, {"cells", cells}};
}

} // namespace plankton::supervised
