#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "plankton/nn/layers.hpp"

namespace plankton::nn {

enum class OptimizerKind { sgd_expdecay, adam };

inline std::string_view optimizer_name(OptimizerKind k)
{
    return k == OptimizerKind::adam ? "adam" : "sgd_expdecay";
}

inline OptimizerKind parse_optimizer(std::string_view s)
{
    if (s == "adam")
        return OptimizerKind::adam;
    if (s == "sgd" || s == "sgd_expdecay")
        return OptimizerKind::sgd_expdecay;
    throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

/// Hyperparameters plus Adam moment buffers. SGD uses lr * gamma^epoch.
template <typename T>
struct OptimizerState
{
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double decay_gamma = 0.95;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    long step_count = 0;

    static OptimizerState sgd(double lr, double gamma)
    {
        OptimizerState s;
        s.kind = OptimizerKind::sgd_expdecay;
        s.lr = lr;
        s.decay_gamma = gamma;
        return s;
    }

    static OptimizerState adam(double lr)
    {
        OptimizerState s;
        s.kind = OptimizerKind::adam;
        s.lr = lr;
        return s;
    }
};

namespace detail {

template <typename T>
void check_grads(const std::vector<Parameter<T>*>& params)
{
    for (const auto* p : params)
        if (p->grad.shape() != p->value.shape())
            throw std::invalid_argument("optimizer: gradient of '" + p->name + "' has shape "
                                        + shape_str(p->grad.shape()) + ", parameter has "
                                        + shape_str(p->value.shape()));
}

} // namespace detail

/// p <- p - lr * gamma^epoch * g
template <typename T>
void sgd_step(OptimizerState<T>& state, const std::vector<Parameter<T>*>& params, int epoch)
{
    if (state.kind != OptimizerKind::sgd_expdecay)
        throw std::invalid_argument("sgd_step on a non-SGD optimizer state");
    if (!(state.lr > 0.0))
        throw std::invalid_argument("learning rate must be positive");
    detail::check_grads(params);
    const T rate = static_cast<T>(state.lr * std::pow(state.decay_gamma, epoch));
    for (auto* p : params) {
        T* v = p->value.data();
        const T* g = p->grad.data();
        for (std::size_t i = 0; i < p->value.size(); ++i)
            v[i] -= rate * g[i];
    }
    ++state.step_count;
}

/// Bias-corrected Adam.
template <typename T>
void adam_step(OptimizerState<T>& state, const std::vector<Parameter<T>*>& params)
{
    if (state.kind != OptimizerKind::adam)
        throw std::invalid_argument("adam_step on a non-Adam optimizer state");
    if (!(state.lr > 0.0))
        throw std::invalid_argument("learning rate must be positive");
    detail::check_grads(params);
    if (state.first_moment.empty()) {
        for (const auto* p : params) {
            state.first_moment.emplace_back(p->value.size(), T{});
            state.second_moment.emplace_back(p->value.size(), T{});
        }
    }
    if (state.first_moment.size() != params.size())
        throw std::invalid_argument("adam_step: parameter list changed between steps");

    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
    const T step = static_cast<T>(state.lr / c1);
    const T root_c2 = static_cast<T>(std::sqrt(c2));
    const T eps = static_cast<T>(state.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto* p = params[k];
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (m.size() != p->value.size())
            throw std::invalid_argument("adam_step: moment buffer of '" + p->name + "' has wrong size");
        T* val = p->value.data();
        const T* g = p->grad.data();
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            // lr * m_hat / (sqrt(v_hat) + eps)
            val[i] -= step * m[i] / (std::sqrt(v[i]) / root_c2 + eps);
        }
    }
}

} // namespace plankton::nn
