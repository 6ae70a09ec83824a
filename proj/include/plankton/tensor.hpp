#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace plankton {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned allocation. Vectorized Eigen kernels peel unaligned
/// heads, so a fixed alignment keeps float results identical across runs.
template <typename T>
struct AlignedAllocator
{
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i)
        out << (i ? "," : "") << shape[i];
    out << ')';
    return out.str();
}

/// Dense row-major tensor. Rank is dynamic; the NN code uses (N, C, H, W)
/// for feature maps and (N, D) for dense activations.
template <typename T>
class Tensor
{
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{})
        : shape_(std::move(shape)), data_(element_count(shape_), fill)
    {
    }

    Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        check_size();
    }

    Tensor(Shape shape, const std::vector<T>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end())
    {
        check_size();
    }

    Tensor(Shape shape, std::initializer_list<T> data) : shape_(std::move(shape)), data_(data)
    {
        check_size();
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    AlignedVector<T>& storage() noexcept { return data_; }
    const AlignedVector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
    {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const
    {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    /// Same values, new shape. Element count must match.
    Tensor reshaped(Shape shape) const&
    {
        return Tensor(std::move(shape), data_);
    }
    Tensor reshaped(Shape shape) &&
    {
        return Tensor(std::move(shape), std::move(data_));
    }

    /// View of sample `n` along the leading axis.
    std::span<T> sample(std::size_t n)
    {
        const std::size_t stride = data_.size() / shape_.at(0);
        return std::span<T>(data_).subspan(n * stride, stride);
    }
    std::span<const T> sample(std::size_t n) const
    {
        const std::size_t stride = data_.size() / shape_.at(0);
        return std::span<const T>(data_).subspan(n * stride, stride);
    }

    template <typename U>
    Tensor<U> cast() const
    {
        return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool all_finite() const
    {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v)))
                return false;
        return true;
    }

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_size() const
    {
        if (data_.size() != element_count(shape_))
            throw std::invalid_argument("tensor: " + std::to_string(data_.size())
                                        + " values do not fill shape " + shape_str(shape_));
    }

    Shape shape_;
    AlignedVector<T> data_;
};

/// Stacks equally shaped samples into a tensor with a new leading axis.
template <typename T, typename Range>
Tensor<T> stack(const Range& samples)
{
    if (std::empty(samples))
        throw std::invalid_argument("stack: no samples");
    const Shape& inner = std::begin(samples)->shape();
    Shape shape{std::size(samples)};
    shape.insert(shape.end(), inner.begin(), inner.end());
    AlignedVector<T> data;
    data.reserve(element_count(shape));
    for (const auto& s : samples) {
        if (s.shape() != inner)
            throw std::invalid_argument("stack: shape " + shape_str(s.shape()) + " differs from "
                                        + shape_str(inner));
        data.insert(data.end(), s.values().begin(), s.values().end());
    }
    return Tensor<T>(std::move(shape), std::move(data));
}

} // namespace plankton
