#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "plankton/tensor.hpp"

namespace plankton::nn {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

/// Trainable array with its accumulated gradient.
template <typename T>
struct Parameter
{
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// A layer caches what its backward pass needs during forward. Gradients
/// accumulate into Parameter::grad until zero_grad.
template <typename T>
class Layer
{
public:
    virtual ~Layer() = default;

    virtual Tensor<T> forward(const Tensor<T>& x) = 0;
    /// Returns dL/dx given dL/dy; requires a preceding forward.
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual Shape output_shape(const Shape& input) const = 0;
    virtual std::vector<Parameter<T>*> parameters() { return {}; }
    virtual std::string kind() const = 0;

protected:
    const Tensor<T>& cached(const std::optional<Tensor<T>>& c) const
    {
        if (!c)
            throw std::logic_error(kind() + ": backward called before forward");
        return *c;
    }
};

/// Kaiming-uniform (fan-in, ReLU gain) weights, zero biases.
template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.values())
        v = static_cast<T>(dist(rng));
}

struct ConvGeometry
{
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t output_padding = 0; // transposed only
    bool transpose = false;
};

namespace detail {

/// (C,H,W) plane -> (C*k*k, Ho*Wo) patch matrix, cross-correlation order.
template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t s,
            std::size_t p, std::size_t oh, std::size_t ow, T* cols)
{
    const std::size_t spatial = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                T* row = cols + ((ci * k + ki) * k + kj) * spatial;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ki) - static_cast<std::ptrdiff_t>(p);
                    const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(h);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kj) - static_cast<std::ptrdiff_t>(p);
                        row[oy * ow + ox] = (row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(w))
                                                ? x[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)]
                                                : T{};
                    }
                }
            }
}

/// Adjoint of im2col: scatter-add patch matrix back into a (C,H,W) plane.
template <typename T>
void col2im(const T* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t s,
            std::size_t p, std::size_t oh, std::size_t ow, T* x)
{
    const std::size_t spatial = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                const T* row = cols + ((ci * k + ki) * k + kj) * spatial;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ki) - static_cast<std::ptrdiff_t>(p);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
                        continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kj) - static_cast<std::ptrdiff_t>(p);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w))
                            x[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += row[oy * ow + ox];
                    }
                }
            }
}

} // namespace detail

/// 2-D convolution (cross-correlation) or its transpose.
///
/// Weight layout follows the usual framework convention:
///   convolution            (C_out, C_in, k, k)
///   transposed convolution (C_in, C_out, k, k)
/// so a transposed layer with the same weight tensor is the exact adjoint
/// of the forward layer with in/out swapped.
template <typename T>
class ConvLayer final : public Layer<T>
{
public:
    ConvLayer(const ConvGeometry& g, const std::string& name = "conv")
        : geom_(g),
          weight_(name + ".weight", g.transpose ? Shape{g.in_channels, g.out_channels, g.kernel, g.kernel}
                                                : Shape{g.out_channels, g.in_channels, g.kernel, g.kernel}),
          bias_(name + ".bias", {g.out_channels})
    {
        if (g.kernel == 0 || g.stride == 0 || g.in_channels == 0 || g.out_channels == 0)
            throw std::invalid_argument(name + ": kernel, stride and channels must be positive");
        if (g.output_padding >= g.stride && g.transpose)
            throw std::invalid_argument(name + ": output_padding must be smaller than stride");
    }

    void initialize(std::mt19937_64& rng)
    {
        kaiming_uniform(weight_.value, geom_.in_channels * geom_.kernel * geom_.kernel, rng);
        bias_.value.fill(T{});
    }

    const ConvGeometry& geometry() const noexcept { return geom_; }
    Parameter<T>& weight() noexcept { return weight_; }
    Parameter<T>& bias() noexcept { return bias_; }

    Shape output_shape(const Shape& in) const override
    {
        if (in.size() != 4 || in[1] != geom_.in_channels)
            throw std::invalid_argument(kind() + ": expected (N," + std::to_string(geom_.in_channels)
                                        + ",H,W) input, got " + shape_str(in));
        const std::size_t k = geom_.kernel, s = geom_.stride, p = geom_.padding;
        if (geom_.transpose) {
            const std::size_t full_h = (in[2] - 1) * s + k + geom_.output_padding;
            const std::size_t full_w = (in[3] - 1) * s + k + geom_.output_padding;
            if (full_h <= 2 * p || full_w <= 2 * p)
                throw std::invalid_argument(kind() + ": output would be empty for input " + shape_str(in));
            return {in[0], geom_.out_channels, full_h - 2 * p, full_w - 2 * p};
        }
        if (in[2] + 2 * p < k || in[3] + 2 * p < k)
            throw std::invalid_argument(kind() + ": kernel larger than padded input " + shape_str(in));
        return {in[0], geom_.out_channels, (in[2] + 2 * p - k) / s + 1, (in[3] + 2 * p - k) / s + 1};
    }

    Tensor<T> forward(const Tensor<T>& x) override
    {
        const Shape out_shape = output_shape(x.shape());
        input_ = x;
        Tensor<T> y(out_shape);
        const std::size_t n = x.dim(0);
        const std::size_t k = geom_.kernel, s = geom_.stride, p = geom_.padding;
        const std::size_t ih = x.dim(2), iw = x.dim(3), oh = out_shape[2], ow = out_shape[3];
        const std::size_t cin = geom_.in_channels, cout = geom_.out_channels;

        if (!geom_.transpose) {
            MatrixRM<T> cols(cin * k * k, oh * ow);
            ConstMapRM<T> wmat(weight_.value.data(), cout, cin * k * k);
            for (std::size_t b = 0; b < n; ++b) {
                detail::im2col(x.sample(b).data(), cin, ih, iw, k, s, p, oh, ow, cols.data());
                MapRM<T> ymat(y.sample(b).data(), cout, oh * ow);
                ymat.noalias() = wmat * cols;
            }
        } else {
            // the output grid is the "input" of the adjoint convolution
            MatrixRM<T> cols(cout * k * k, ih * iw);
            ConstMapRM<T> wmat(weight_.value.data(), cin, cout * k * k);
            for (std::size_t b = 0; b < n; ++b) {
                ConstMapRM<T> xmat(x.sample(b).data(), cin, ih * iw);
                cols.noalias() = wmat.transpose() * xmat;
                detail::col2im(cols.data(), cout, oh, ow, k, s, p, ih, iw, y.sample(b).data());
            }
        }
        add_bias(y);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override
    {
        const Tensor<T>& x = this->cached(input_);
        const Shape out_shape = output_shape(x.shape());
        if (grad_out.shape() != out_shape)
            throw std::invalid_argument(kind() + ": gradient shape " + shape_str(grad_out.shape())
                                        + " does not match output " + shape_str(out_shape));
        Tensor<T> dx(x.shape());
        const std::size_t n = x.dim(0);
        const std::size_t k = geom_.kernel, s = geom_.stride, p = geom_.padding;
        const std::size_t ih = x.dim(2), iw = x.dim(3), oh = out_shape[2], ow = out_shape[3];
        const std::size_t cin = geom_.in_channels, cout = geom_.out_channels;

        if (!geom_.transpose) {
            MatrixRM<T> cols(cin * k * k, oh * ow);
            MatrixRM<T> dcols(cin * k * k, oh * ow);
            ConstMapRM<T> wmat(weight_.value.data(), cout, cin * k * k);
            MapRM<T> dw(weight_.grad.data(), cout, cin * k * k);
            for (std::size_t b = 0; b < n; ++b) {
                ConstMapRM<T> dy(grad_out.sample(b).data(), cout, oh * ow);
                detail::im2col(x.sample(b).data(), cin, ih, iw, k, s, p, oh, ow, cols.data());
                dw.noalias() += dy * cols.transpose();
                dcols.noalias() = wmat.transpose() * dy;
                detail::col2im(dcols.data(), cin, ih, iw, k, s, p, oh, ow, dx.sample(b).data());
            }
        } else {
            MatrixRM<T> dcols(cout * k * k, ih * iw);
            ConstMapRM<T> wmat(weight_.value.data(), cin, cout * k * k);
            MapRM<T> dw(weight_.grad.data(), cin, cout * k * k);
            for (std::size_t b = 0; b < n; ++b) {
                detail::im2col(grad_out.sample(b).data(), cout, oh, ow, k, s, p, ih, iw, dcols.data());
                ConstMapRM<T> xmat(x.sample(b).data(), cin, ih * iw);
                MapRM<T> dxmat(dx.sample(b).data(), cin, ih * iw);
                dxmat.noalias() = wmat * dcols;
                dw.noalias() += xmat * dcols.transpose();
            }
        }
        const std::size_t spatial = oh * ow;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t c = 0; c < cout; ++c) {
                const T* g = grad_out.sample(b).data() + c * spatial;
                T acc{};
                for (std::size_t i = 0; i < spatial; ++i)
                    acc += g[i];
                bias_.grad[c] += acc;
            }
        return dx;
    }

    std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
    std::string kind() const override { return geom_.transpose ? "conv_transpose" : "conv"; }

private:
    void add_bias(Tensor<T>& y) const
    {
        const std::size_t n = y.dim(0), c = y.dim(1), spatial = y.dim(2) * y.dim(3);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
                T* plane = y.sample(b).data() + ch * spatial;
                const T bias = bias_.value[ch];
                for (std::size_t i = 0; i < spatial; ++i)
                    plane[i] += bias;
            }
    }

    ConvGeometry geom_;
    Parameter<T> weight_;
    Parameter<T> bias_;
    std::optional<Tensor<T>> input_;
};

/// y = x W^T + b over the flattened trailing dimensions. Output is (N, out).
template <typename T>
class DenseLayer final : public Layer<T>
{
public:
    DenseLayer(std::size_t in_dim, std::size_t out_dim, const std::string& name = "dense")
        : in_(in_dim), out_(out_dim), weight_(name + ".weight", {out_dim, in_dim}), bias_(name + ".bias", {out_dim})
    {
        if (in_dim == 0 || out_dim == 0)
            throw std::invalid_argument(name + ": dimensions must be positive");
    }

    void initialize(std::mt19937_64& rng)
    {
        kaiming_uniform(weight_.value, in_, rng);
        bias_.value.fill(T{});
    }

    std::size_t in_dim() const noexcept { return in_; }
    std::size_t out_dim() const noexcept { return out_; }
    Parameter<T>& weight() noexcept { return weight_; }
    Parameter<T>& bias() noexcept { return bias_; }

    Shape output_shape(const Shape& in) const override
    {
        if (in.empty() || element_count(in) != in[0] * in_)
            throw std::invalid_argument(kind() + ": expected " + std::to_string(in_) + " features per sample, got "
                                        + shape_str(in));
        return {in[0], out_};
    }

    Tensor<T> forward(const Tensor<T>& x) override
    {
        const Shape out_shape = output_shape(x.shape());
        input_ = x;
        Tensor<T> y(out_shape);
        const auto n = static_cast<Eigen::Index>(x.dim(0));
        ConstMapRM<T> xm(x.data(), n, static_cast<Eigen::Index>(in_));
        ConstMapRM<T> wm(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
        MapRM<T> ym(y.data(), n, static_cast<Eigen::Index>(out_));
        ym.noalias() = xm * wm.transpose();
        ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.data(), static_cast<Eigen::Index>(out_));
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override
    {
        const Tensor<T>& x = this->cached(input_);
        const auto n = static_cast<Eigen::Index>(x.dim(0));
        if (grad_out.size() != static_cast<std::size_t>(n) * out_)
            throw std::invalid_argument(kind() + ": gradient shape " + shape_str(grad_out.shape()) + " mismatch");
        Tensor<T> dx(x.shape());
        ConstMapRM<T> xm(x.data(), n, static_cast<Eigen::Index>(in_));
        ConstMapRM<T> dy(grad_out.data(), n, static_cast<Eigen::Index>(out_));
        ConstMapRM<T> wm(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
        MapRM<T>(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_)).noalias()
            += dy.transpose() * xm;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad.data(), static_cast<Eigen::Index>(out_))
            += dy.colwise().sum();
        MapRM<T>(dx.data(), n, static_cast<Eigen::Index>(in_)).noalias() = dy * wm;
        return dx;
    }

    std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
    std::string kind() const override { return "dense"; }

private:
    std::size_t in_, out_;
    Parameter<T> weight_;
    Parameter<T> bias_;
    std::optional<Tensor<T>> input_;
};

template <typename T>
class ReluLayer final : public Layer<T>
{
public:
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x) override
    {
        input_ = x;
        Tensor<T> y = x;
        for (auto& v : y.values())
            v = v > T{} ? v : T{};
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override
    {
        const Tensor<T>& x = this->cached(input_);
        if (grad_out.shape() != x.shape())
            throw std::invalid_argument("relu: gradient shape mismatch");
        Tensor<T> dx = grad_out;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(x[i] > T{}))
                dx[i] = T{};
        return dx;
    }

    std::string kind() const override { return "relu"; }

private:
    std::optional<Tensor<T>> input_;
};

/// Relabels each sample to `sample_shape` (batch axis preserved).
template <typename T>
class ReshapeLayer final : public Layer<T>
{
public:
    explicit ReshapeLayer(Shape sample_shape) : sample_shape_(std::move(sample_shape)) {}

    Shape output_shape(const Shape& in) const override
    {
        Shape out{in.at(0)};
        out.insert(out.end(), sample_shape_.begin(), sample_shape_.end());
        if (element_count(out) != element_count(in))
            throw std::invalid_argument("reshape: cannot relabel " + shape_str(in) + " as " + shape_str(out));
        return out;
    }

    Tensor<T> forward(const Tensor<T>& x) override
    {
        input_shape_ = x.shape();
        return x.reshaped(output_shape(x.shape()));
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override
    {
        if (!input_shape_)
            throw std::logic_error("reshape: backward called before forward");
        return grad_out.reshaped(*input_shape_);
    }

    std::string kind() const override { return "reshape"; }

private:
    Shape sample_shape_;
    std::optional<Shape> input_shape_;
};

/// Layers applied in order; backward runs them in reverse.
template <typename T>
class Sequential
{
public:
    Sequential() = default;
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <typename L>
    L& add(std::unique_ptr<L> layer)
    {
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Tensor<T> forward(const Tensor<T>& x)
    {
        Tensor<T> h = x;
        for (auto& l : layers_)
            h = l->forward(h);
        return h;
    }

    Tensor<T> backward(const Tensor<T>& grad_out)
    {
        Tensor<T> g = grad_out;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
            g = (*it)->backward(g);
        return g;
    }

    Shape output_shape(Shape in) const
    {
        for (const auto& l : layers_)
            in = l->output_shape(in);
        return in;
    }

    std::vector<Parameter<T>*> parameters()
    {
        std::vector<Parameter<T>*> out;
        for (auto& l : layers_)
            for (auto* p : l->parameters())
                out.push_back(p);
        return out;
    }

    std::size_t size() const noexcept { return layers_.size(); }
    Layer<T>& operator[](std::size_t i) { return *layers_.at(i); }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
void zero_grad(const std::vector<Parameter<T>*>& params)
{
    for (auto* p : params)
        p->grad.fill(T{});
}

template <typename T>
std::size_t parameter_count(const std::vector<Parameter<T>*>& params)
{
    std::size_t n = 0;
    for (auto* p : params)
        n += p->value.size();
    return n;
}

} // namespace plankton::nn
