#pragma once

// Reference implementations used as test oracles. Deliberately naive: plain
// loops straight from the definitions, no shared code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "plankton/nn/layers.hpp"

namespace oracle {

using plankton::Tensor;

/// Direct convolution, weights (Cout, Cin, k, k), input (N, Cin, H, W).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride, std::size_t pad)
{
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    Tensor<T> y({n, cout, oh, ow});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    T acc = b[co];
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t a = 0; a < k; ++a)
                            for (std::size_t c = 0; c < k; ++c) {
                                const long yy = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j * stride + c) - static_cast<long>(pad);
                                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd))
                                    continue;
                                acc += x.at(s, ci, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx))
                                       * w.at(co, ci, a, c);
                            }
                    y.at(s, co, i, j) = acc;
                }
    return y;
}

/// Transposed convolution by scattering, weights (Cin, Cout, k, k).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                           std::size_t pad, std::size_t output_padding)
{
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(1), k = w.dim(2);
    const std::size_t oh = (h - 1) * stride - 2 * pad + k + output_padding;
    const std::size_t ow = (wd - 1) * stride - 2 * pad + k + output_padding;
    Tensor<T> y({n, cout, oh, ow});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j)
                    y.at(s, co, i, j) = b[co];
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < wd; ++j)
                    for (std::size_t co = 0; co < cout; ++co)
                        for (std::size_t a = 0; a < k; ++a)
                            for (std::size_t c = 0; c < k; ++c) {
                                const long yy = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j * stride + c) - static_cast<long>(pad);
                                if (yy < 0 || xx < 0 || yy >= static_cast<long>(oh) || xx >= static_cast<long>(ow))
                                    continue;
                                y.at(s, co, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx))
                                    += x.at(s, ci, i, j) * w.at(ci, co, a, c);
                            }
    return y;
}

/// Purity straight from the definition: scan samples per (cluster, class) pair.
inline double purity(const std::vector<int>& clusters, const std::vector<int>& classes)
{
    const std::set<int> ks(clusters.begin(), clusters.end()), cs(classes.begin(), classes.end());
    std::size_t hits = 0;
    for (const int k : ks) {
        std::size_t best = 0;
        for (const int c : cs) {
            std::size_t count = 0;
            for (std::size_t i = 0; i < clusters.size(); ++i)
                count += clusters[i] == k && classes[i] == c;
            best = std::max(best, count);
        }
        hits += best;
    }
    return static_cast<double>(hits) / static_cast<double>(clusters.size());
}

/// Primary cluster of every class (most samples, lowest id on ties).
inline std::map<int, int> primary_clusters(const std::vector<int>& clusters, const std::vector<int>& classes)
{
    const std::set<int> ks(clusters.begin(), clusters.end()), cs(classes.begin(), classes.end());
    std::map<int, int> out;
    for (const int c : cs) {
        int best_k = *ks.begin();
        std::size_t best = 0;
        for (const int k : ks) { // ascending, strict > keeps the lowest id
            std::size_t count = 0;
            for (std::size_t i = 0; i < clusters.size(); ++i)
                count += clusters[i] == k && classes[i] == c;
            if (count > best) {
                best = count;
                best_k = k;
            }
        }
        out[c] = best_k;
    }
    return out;
}

/// Collision count: for every class, 1 if an earlier class already claimed its primary cluster.
inline int overlaps(const std::vector<int>& clusters, const std::vector<int>& classes)
{
    std::set<int> claimed;
    int collisions = 0;
    for (const auto& [c, k] : primary_clusters(clusters, classes))
        if (!claimed.insert(k).second)
            ++collisions;
    return collisions;
}

/// Number of unordered class pairs sharing a primary cluster.
inline int overlap_pairs(const std::vector<int>& clusters, const std::vector<int>& classes)
{
    const auto p = primary_clusters(clusters, classes);
    int pairs = 0;
    for (auto a = p.begin(); a != p.end(); ++a)
        for (auto b = std::next(a); b != p.end(); ++b)
            pairs += a->second == b->second;
    return pairs;
}

/// Dense solve by Gaussian elimination with partial pivoting; A is n x n row-major, B is n x m.
inline std::vector<std::vector<double>> solve(std::vector<std::vector<double>> a, std::vector<std::vector<double>> b)
{
    const std::size_t n = a.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col]))
                piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c)
                a[r][c] -= f * a[col][c];
            for (std::size_t c = 0; c < b[r].size(); ++c)
                b[r][c] -= f * b[col][c];
        }
    }
    for (std::size_t r = n; r-- > 0;) {
        for (std::size_t c = 0; c < b[r].size(); ++c) {
            double v = b[r][c];
            for (std::size_t k = r + 1; k < n; ++k)
                v -= a[r][k] * b[k][c];
            b[r][c] = v / a[r][r];
        }
    }
    return b;
}

/// Lloyd's k-means from given centroids until assignments stop changing.
inline std::vector<std::vector<double>> kmeans(const std::vector<std::vector<double>>& pts,
                                               std::vector<std::vector<double>> c, int iters = 100)
{
    std::vector<std::size_t> assign(pts.size(), 0);
    for (int it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double best = INFINITY;
            for (std::size_t j = 0; j < c.size(); ++j) {
                double d = 0;
                for (std::size_t t = 0; t < pts[i].size(); ++t)
                    d += (pts[i][t] - c[j][t]) * (pts[i][t] - c[j][t]);
                if (d < best) {
                    best = d;
                    assign[i] = j;
                }
            }
        }
        for (std::size_t j = 0; j < c.size(); ++j) {
            std::vector<double> sum(pts[0].size(), 0.0);
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (assign[i] == j) {
                    ++cnt;
                    for (std::size_t t = 0; t < sum.size(); ++t)
                        sum[t] += pts[i][t];
                }
            if (cnt)
                for (std::size_t t = 0; t < sum.size(); ++t)
                    c[j][t] = sum[t] / static_cast<double>(cnt);
        }
    }
    return c;
}

} // namespace oracle
