#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "plankton/nn/layers.hpp"
#include "plankton/nn/optim.hpp"

namespace plankton::supervised {

struct FcConfig
{
    std::vector<std::size_t> hidden{256, 128};
    int epochs = 100;
    std::size_t batch_size = 32;
    double lr = 0.01;
    std::uint64_t seed = 0;
};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the scores.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& scores, std::span<const int> labels, Tensor<T>* grad = nullptr)
{
    if (scores.rank() != 2 || scores.dim(0) != labels.size())
        throw std::invalid_argument("softmax_cross_entropy: scores " + shape_str(scores.shape()) + " for "
                                    + std::to_string(labels.size()) + " labels");
    const std::size_t n = scores.dim(0), c = scores.dim(1);
    if (grad)
        *grad = Tensor<T>(scores.shape());
    T total{};
    for (std::size_t i = 0; i < n; ++i) {
        const T* s = scores.data() + i * c;
        const T top = *std::max_element(s, s + c);
        T z{};
        for (std::size_t j = 0; j < c; ++j)
            z += std::exp(s[j] - top);
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y >= c)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        total += std::log(z) - (s[y] - top);
        if (grad)
            for (std::size_t j = 0; j < c; ++j)
                (*grad)[i * c + j] = (std::exp(s[j] - top) / z - (j == y ? T{1} : T{})) / static_cast<T>(n);
    }
    return total / static_cast<T>(n);
}

/// Dense Z -> hidden... -> classes with ReLU between layers.
template <typename T>
class FcClassifier
{
public:
    FcClassifier(std::size_t in_dim, std::size_t n_classes, const FcConfig& config)
        : in_(in_dim), classes_(n_classes), config_(config)
    {
        if (n_classes < 2)
            throw std::invalid_argument("fc classifier needs at least 2 classes");
        std::mt19937_64 rng(config.seed);
        std::size_t prev = in_dim;
        for (std::size_t i = 0; i < config.hidden.size(); ++i) {
            net_.add(std::make_unique<nn::DenseLayer<T>>(prev, config.hidden[i], "fc" + std::to_string(i)))
                .initialize(rng);
            net_.add(std::make_unique<nn::ReluLayer<T>>());
            prev = config.hidden[i];
        }
        net_.add(std::make_unique<nn::DenseLayer<T>>(prev, n_classes, "fc_out")).initialize(rng);
    }

    std::size_t in_dim() const noexcept { return in_; }
    std::size_t n_classes() const noexcept { return classes_; }
    const FcConfig& config() const noexcept { return config_; }

    Tensor<T> scores(const Tensor<T>& x) { return net_.forward(x); }

    std::vector<int> predict(const Tensor<T>& x)
    {
        const Tensor<T> s = scores(x);
        std::vector<int> out(s.dim(0));
        for (std::size_t i = 0; i < out.size(); ++i) {
            const T* row = s.data() + i * classes_;
            out[i] = static_cast<int>(std::max_element(row, row + classes_) - row);
        }
        return out;
    }

    /// Loss on (x, labels); accumulates gradients into the parameters.
    T loss_and_grad(const Tensor<T>& x, std::span<const int> labels)
    {
        Tensor<T> g;
        const T l = softmax_cross_entropy(net_.forward(x), labels, &g);
        net_.backward(g);
        return l;
    }

    std::vector<nn::Parameter<T>*> parameters() { return net_.parameters(); }

private:
    std::size_t in_, classes_;
    FcConfig config_;
    nn::Sequential<T> net_;
};

template <typename T>
struct FcResult
{
    FcClassifier<T> model;
    std::vector<double> loss_history; // mean loss per epoch
};

/// Plain minibatch SGD with seeded shuffling. x is (N, Z).
template <typename T>
FcResult<T> fc_train(const Tensor<T>& x, std::span<const int> labels, std::size_t n_classes, const FcConfig& config)
{
    if (x.rank() != 2 || x.dim(0) == 0)
        throw std::invalid_argument("fc_train: expected a non-empty (N, Z) matrix, got " + shape_str(x.shape()));
    if (x.dim(0) != labels.size())
        throw std::invalid_argument("fc_train: row and label counts differ");
    FcResult<T> r{FcClassifier<T>(x.dim(1), n_classes, config), {}};
    auto params = r.model.parameters();
    auto opt = nn::OptimizerState<T>::sgd(config.lr, 1.0);
    std::mt19937_64 rng(config.seed ^ 0x2545f4914f6cdd1dULL);
    const std::size_t n = x.dim(0), z = x.dim(1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, n - start);
            Tensor<T> xb({b, z});
            std::vector<int> yb(b);
            for (std::size_t i = 0; i < b; ++i) {
                std::copy_n(x.data() + order[start + i] * z, z, xb.data() + i * z);
                yb[i] = labels[order[start + i]];
            }
            nn::zero_grad(params);
            const T l = r.model.loss_and_grad(xb, yb);
            if (!std::isfinite(static_cast<double>(l)))
                throw std::runtime_error("fc_train: non-finite loss at epoch " + std::to_string(epoch));
            nn::sgd_step(opt, params, 0);
            sum += static_cast<double>(l) * static_cast<double>(b);
        }
        r.loss_history.push_back(sum / static_cast<double>(n));
    }
    return r;
}

} // namespace plankton::supervised
