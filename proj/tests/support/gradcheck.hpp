#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "plankton/nn/layers.hpp"

namespace gradcheck {

using plankton::Tensor;

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b)
{
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central differences of `loss` with respect to every entry of `values`.
inline std::vector<double> numeric(std::span<double> values, const std::function<double()>& loss, double h = 1e-6)
{
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double keep = values[i];
        values[i] = keep + h;
        const double up = loss();
        values[i] = keep - h;
        const double down = loss();
        values[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline Tensor<double> random_tensor(plankton::Shape shape, std::mt19937_64& rng, double scale = 1.0)
{
    Tensor<double> t(std::move(shape));
    std::normal_distribution<double> d(0.0, scale);
    for (auto& v : t.values())
        v = d(rng);
    return t;
}

struct LayerResult
{
    double input_error = 0.0;
    double param_error = 0.0;
};

/// Checks a layer against L = sum(w * layer(x)) for random w.
inline LayerResult check_layer(plankton::nn::Layer<double>& layer, Tensor<double> x, std::mt19937_64& rng)
{
    const Tensor<double> y0 = layer.forward(x);
    const Tensor<double> w = random_tensor(y0.shape(), rng);
    auto loss = [&] {
        const Tensor<double> y = layer.forward(x);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i)
            s += y[i] * w[i];
        return s;
    };
    LayerResult r;
    const auto params = layer.parameters();
    plankton::nn::zero_grad(params);
    layer.forward(x);
    const Tensor<double> dx = layer.backward(w);
    r.input_error = relative_error(dx.storage(), numeric(x.storage(), loss));
    std::vector<double> analytic, num;
    for (auto* p : params) {
        analytic.insert(analytic.end(), p->grad.values().begin(), p->grad.values().end());
        const auto g = numeric(p->value.storage(), loss);
        num.insert(num.end(), g.begin(), g.end());
    }
    r.param_error = relative_error(analytic, num);
    return r;
}

} // namespace gradcheck
