#include "plankton/features/onnx.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace plankton::onnx {
namespace {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ValueMap = std::map<std::string, Value>;

// Activations first, then initializers.
struct Env
{
    const ValueMap& activations;
    const ValueMap& initializers;

    const Value* find(const std::string& name) const
    {
        if (auto it = activations.find(name); it != activations.end())
            return &it->second;
        if (auto it = initializers.find(name); it != initializers.end())
            return &it->second;
        return nullptr;
    }
};

std::runtime_error op_error(const Node& node, const std::string& what)
{
    return std::runtime_error("onnx: " + node.op_type + " '" + node.name + "': " + what);
}

const Value& input(const Env& values, const Node& node, std::size_t i)
{
    if (i >= node.inputs.size() || node.inputs[i].empty())
        throw op_error(node, "missing input #" + std::to_string(i));
    const Value* v = values.find(node.inputs[i]);
    if (!v)
        throw op_error(node, "input '" + node.inputs[i] + "' is not produced by any earlier node");
    return *v;
}

const Value* optional_input(const Env& values, const Node& node, std::size_t i)
{
    if (i >= node.inputs.size() || node.inputs[i].empty())
        return nullptr;
    return &input(values, node, i);
}

const Value& float_input(const Env& values, const Node& node, std::size_t i)
{
    const Value& v = input(values, node, i);
    if (v.is_int)
        throw op_error(node, "expected a float tensor for input #" + std::to_string(i));
    return v;
}

struct Window2d
{
    std::size_t kh, kw, sh, sw, dh, dw;
    std::size_t pad_top, pad_left, pad_bottom, pad_right;
    std::size_t out_h, out_w;
};

Window2d window(const Node& node, std::size_t in_h, std::size_t in_w, std::size_t kh, std::size_t kw,
                bool allow_ceil)
{
    const auto strides = node.attr_ints("strides", {1, 1});
    const auto dil = node.attr_ints("dilations", {1, 1});
    auto pads = node.attr_ints("pads", {0, 0, 0, 0});
    const std::string auto_pad = node.attr_string("auto_pad", "NOTSET");
    const bool ceil_mode = allow_ceil && node.attr_int("ceil_mode", 0) != 0;
    if (strides.size() != 2 || dil.size() != 2 || pads.size() != 4)
        throw op_error(node, "only 2-D windows are supported");

    Window2d w{kh, kw, static_cast<std::size_t>(strides[0]), static_cast<std::size_t>(strides[1]),
               static_cast<std::size_t>(dil[0]), static_cast<std::size_t>(dil[1]), 0, 0, 0, 0, 0, 0};
    const std::size_t ekh = (kh - 1) * w.dh + 1;
    const std::size_t ekw = (kw - 1) * w.dw + 1;
    if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
        const std::size_t oh = (in_h + w.sh - 1) / w.sh;
        const std::size_t ow = (in_w + w.sw - 1) / w.sw;
        const std::size_t ph = std::max<std::int64_t>(0, static_cast<std::int64_t>((oh - 1) * w.sh + ekh) - static_cast<std::int64_t>(in_h));
        const std::size_t pw = std::max<std::int64_t>(0, static_cast<std::int64_t>((ow - 1) * w.sw + ekw) - static_cast<std::int64_t>(in_w));
        const bool upper = auto_pad == "SAME_UPPER";
        pads = {static_cast<std::int64_t>(upper ? ph / 2 : ph - ph / 2),
                static_cast<std::int64_t>(upper ? pw / 2 : pw - pw / 2),
                static_cast<std::int64_t>(upper ? ph - ph / 2 : ph / 2),
                static_cast<std::int64_t>(upper ? pw - pw / 2 : pw / 2)};
    } else if (auto_pad == "VALID") {
        pads = {0, 0, 0, 0};
    } else if (auto_pad != "NOTSET") {
        throw op_error(node, "unsupported auto_pad " + auto_pad);
    }
    w.pad_top = static_cast<std::size_t>(pads[0]);
    w.pad_left = static_cast<std::size_t>(pads[1]);
    w.pad_bottom = static_cast<std::size_t>(pads[2]);
    w.pad_right = static_cast<std::size_t>(pads[3]);

    const std::size_t span_h = in_h + w.pad_top + w.pad_bottom;
    const std::size_t span_w = in_w + w.pad_left + w.pad_right;
    if (span_h < ekh || span_w < ekw)
        throw op_error(node, "window larger than padded input");
    auto out_dim = [&](std::size_t span, std::size_t ek, std::size_t s, std::size_t in, std::size_t pad_begin) {
        std::size_t o = ceil_mode ? (span - ek + s - 1) / s + 1 : (span - ek) / s + 1;
        // last window must start inside the input or left padding
        if (ceil_mode && (o - 1) * s >= in + pad_begin)
            --o;
        return o;
    };
    w.out_h = out_dim(span_h, ekh, w.sh, in_h, w.pad_top);
    w.out_w = out_dim(span_w, ekw, w.sw, in_w, w.pad_left);
    return w;
}

void require_rank4(const Node& node, const Value& v)
{
    if (v.shape.size() != 4)
        throw op_error(node, "expected NCHW input, got shape " + shape_str(v.shape));
}

Value conv(const Env& values, const Node& node)
{
    const Value& x = float_input(values, node, 0);
    const Value& w = float_input(values, node, 1);
    const Value* b = optional_input(values, node, 2);
    require_rank4(node, x);
    if (w.shape.size() != 4)
        throw op_error(node, "expected 4-D weights");
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const std::size_t m = w.shape[0], cg = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    const auto group = static_cast<std::size_t>(node.attr_int("group", 1));
    if (group == 0 || c % group || m % group || c / group != cg)
        throw op_error(node, "channel/group mismatch: input " + shape_str(x.shape) + ", weights "
                                 + shape_str(w.shape) + ", group " + std::to_string(group));
    const Window2d win = window(node, h, wd, kh, kw, false);
    const std::size_t oh = win.out_h, ow = win.out_w, spatial = oh * ow;
    const std::size_t mg = m / group;
    const std::size_t patch = cg * kh * kw;
    const bool pointwise = kh == 1 && kw == 1 && win.sh == 1 && win.sw == 1 && win.pad_top == 0
                           && win.pad_left == 0 && win.pad_bottom == 0 && win.pad_right == 0;

    Value y = Value::from_floats({n, m, oh, ow}, AlignedVector<float>(n * m * spatial));
    MatrixRM cols(patch, spatial);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t g = 0; g < group; ++g) {
            const float* xin = x.floats.data() + (s * c + g * cg) * h * wd;
            float* yout = y.floats.data() + (s * m + g * mg) * spatial;
            Eigen::Map<const MatrixRM> wmat(w.floats.data() + g * mg * patch, mg, patch);
            Eigen::Map<MatrixRM> ymat(yout, mg, spatial);
            if (pointwise) {
                ymat.noalias() = wmat * Eigen::Map<const MatrixRM>(xin, cg, spatial);
                continue;
            }
            for (std::size_t ci = 0; ci < cg; ++ci)
                for (std::size_t ki = 0; ki < kh; ++ki)
                    for (std::size_t kj = 0; kj < kw; ++kj) {
                        float* row = cols.data() + ((ci * kh + ki) * kw + kj) * spatial;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * win.sh + ki * win.dh)
                                                      - static_cast<std::ptrdiff_t>(win.pad_top);
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * win.sw + kj * win.dw)
                                                          - static_cast<std::ptrdiff_t>(win.pad_left);
                                row[oy * ow + ox] = (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h)
                                                     && ix < static_cast<std::ptrdiff_t>(wd))
                                                        ? xin[(ci * h + static_cast<std::size_t>(iy)) * wd
                                                              + static_cast<std::size_t>(ix)]
                                                        : 0.0f;
                            }
                        }
                    }
            ymat.noalias() = wmat * cols;
        }
        if (b) {
            if (b->size() != m)
                throw op_error(node, "bias size mismatch");
            for (std::size_t o = 0; o < m; ++o) {
                float* plane = y.floats.data() + (s * m + o) * spatial;
                for (std::size_t i = 0; i < spatial; ++i)
                    plane[i] += b->floats[o];
            }
        }
    }
    return y;
}

Value batch_norm(const Env& values, const Node& node)
{
    const Value& x = float_input(values, node, 0);
    const Value& scale = float_input(values, node, 1);
    const Value& bias = float_input(values, node, 2);
    const Value& mean = float_input(values, node, 3);
    const Value& var = float_input(values, node, 4);
    if (x.shape.size() < 2)
        throw op_error(node, "expected at least 2-D input");
    const float eps = node.attr_float("epsilon", 1e-5f);
    const std::size_t n = x.shape[0], c = x.shape[1];
    const std::size_t inner = x.size() / (n * c);
    if (scale.size() != c || bias.size() != c || mean.size() != c || var.size() != c)
        throw op_error(node, "parameter size does not match channel count " + std::to_string(c));
    Value y = x;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const float a = scale.floats[ch] / std::sqrt(var.floats[ch] + eps);
        const float off = bias.floats[ch] - a * mean.floats[ch];
        for (std::size_t s = 0; s < n; ++s) {
            float* p = y.floats.data() + (s * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i)
                p[i] = a * p[i] + off;
        }
    }
    return y;
}

Value pool(const Env& values, const Node& node, bool is_max)
{
    const Value& x = float_input(values, node, 0);
    require_rank4(node, x);
    const auto kernel = node.attr_ints("kernel_shape", {});
    if (kernel.size() != 2)
        throw op_error(node, "kernel_shape must have 2 entries");
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const Window2d win = window(node, h, wd, static_cast<std::size_t>(kernel[0]),
                                static_cast<std::size_t>(kernel[1]), true);
    const bool count_pad = node.attr_int("count_include_pad", 0) != 0;
    Value y = Value::from_floats({n, c, win.out_h, win.out_w},
                                 AlignedVector<float>(n * c * win.out_h * win.out_w));
    for (std::size_t p = 0; p < n * c; ++p) {
        const float* in = x.floats.data() + p * h * wd;
        float* out = y.floats.data() + p * win.out_h * win.out_w;
        for (std::size_t oy = 0; oy < win.out_h; ++oy)
            for (std::size_t ox = 0; ox < win.out_w; ++ox) {
                float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.0f;
                std::size_t counted = 0, padded = 0;
                for (std::size_t ki = 0; ki < win.kh; ++ki)
                    for (std::size_t kj = 0; kj < win.kw; ++kj) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * win.sh + ki * win.dh)
                                                  - static_cast<std::ptrdiff_t>(win.pad_top);
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * win.sw + kj * win.dw)
                                                  - static_cast<std::ptrdiff_t>(win.pad_left);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h)
                                            && ix < static_cast<std::ptrdiff_t>(wd);
                        if (!inside) {
                            // count_include_pad covers explicit padding, not ceil-mode overhang
                            if (iy < static_cast<std::ptrdiff_t>(h + win.pad_bottom)
                                && ix < static_cast<std::ptrdiff_t>(wd + win.pad_right))
                                ++padded;
                            continue;
                        }
                        const float v = in[static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)];
                        acc = is_max ? std::max(acc, v) : acc + v;
                        ++counted;
                    }
                if (!is_max) {
                    const std::size_t denom = count_pad ? counted + padded : counted;
                    acc = denom ? acc / static_cast<float>(denom) : 0.0f;
                }
                out[oy * win.out_w + ox] = acc;
            }
    }
    return y;
}

Value global_average_pool(const Env& values, const Node& node)
{
    const Value& x = float_input(values, node, 0);
    require_rank4(node, x);
    const std::size_t n = x.shape[0], c = x.shape[1], inner = x.shape[2] * x.shape[3];
    Value y = Value::from_floats({n, c, 1, 1}, AlignedVector<float>(n * c));
    for (std::size_t p = 0; p < n * c; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i)
            acc += x.floats[p * inner + i];
        y.floats[p] = static_cast<float>(acc / static_cast<double>(inner));
    }
    return y;
}

std::size_t normalize_axis(const Node& node, std::int64_t axis, std::size_t rank)
{
    const std::int64_t r = static_cast<std::int64_t>(rank);
    if (axis < -r || axis >= r)
        throw op_error(node, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

Value concat(const Env& values, const Node& node)
{
    const Value& first = input(values, node, 0);
    const std::size_t axis = normalize_axis(node, node.attr_int("axis", 0), first.shape.size());
    Shape out_shape = first.shape;
    out_shape[axis] = 0;
    std::vector<const Value*> parts;
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const Value& v = input(values, node, i);
        if (v.is_int != first.is_int || v.shape.size() != first.shape.size())
            throw op_error(node, "inputs disagree in type or rank");
        for (std::size_t d = 0; d < v.shape.size(); ++d)
            if (d != axis && v.shape[d] != first.shape[d])
                throw op_error(node, "shape " + shape_str(v.shape) + " incompatible with " + shape_str(first.shape));
        out_shape[axis] += v.shape[axis];
        parts.push_back(&v);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d)
        outer *= out_shape[d];
    for (std::size_t d = axis + 1; d < out_shape.size(); ++d)
        inner *= out_shape[d];

    auto gather = [&](auto member) {
        std::remove_cvref_t<decltype(first.*member)> out;
        out.reserve(element_count(out_shape));
        for (std::size_t o = 0; o < outer; ++o)
            for (const Value* p : parts) {
                const std::size_t chunk = p->shape[axis] * inner;
                const auto& src = p->*member;
                out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(o * chunk),
                           src.begin() + static_cast<std::ptrdiff_t>((o + 1) * chunk));
            }
        return out;
    };
    if (first.is_int)
        return Value::from_ints(out_shape, gather(&Value::ints));
    return Value::from_floats(out_shape, gather(&Value::floats));
}

Value add(const Env& values, const Node& node)
{
    const Value& a = float_input(values, node, 0);
    const Value& b = float_input(values, node, 1);
    const std::size_t rank = std::max(a.shape.size(), b.shape.size());
    auto padded = [&](const Shape& s) {
        Shape p(rank - s.size(), 1);
        p.insert(p.end(), s.begin(), s.end());
        return p;
    };
    const Shape sa = padded(a.shape), sb = padded(b.shape);
    Shape out(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        if (sa[d] != sb[d] && sa[d] != 1 && sb[d] != 1)
            throw op_error(node, "cannot broadcast " + shape_str(a.shape) + " with " + shape_str(b.shape));
        out[d] = std::max(sa[d], sb[d]);
    }
    auto strides = [&](const Shape& s) {
        std::vector<std::size_t> st(rank, 0);
        std::size_t acc = 1;
        for (std::size_t d = rank; d-- > 0;) {
            st[d] = s[d] == 1 ? 0 : acc;
            acc *= s[d];
        }
        return st;
    };
    const auto ta = strides(sa), tb = strides(sb);
    const std::size_t total = element_count(out);
    AlignedVector<float> y(total);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t ia = 0, ib = 0;
        for (std::size_t d = 0; d < rank; ++d) {
            ia += idx[d] * ta[d];
            ib += idx[d] * tb[d];
        }
        y[i] = a.floats[ia] + b.floats[ib];
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out[d])
                break;
            idx[d] = 0;
        }
    }
    return Value::from_floats(out, std::move(y));
}

Value flatten(const Env& values, const Node& node)
{
    Value v = input(values, node, 0);
    const std::int64_t r = static_cast<std::int64_t>(v.shape.size());
    std::int64_t axis = node.attr_int("axis", 1);
    if (axis < 0)
        axis += r;
    if (axis < 0 || axis > r)
        throw op_error(node, "axis out of range");
    std::size_t outer = 1;
    for (std::int64_t d = 0; d < axis; ++d)
        outer *= v.shape[static_cast<std::size_t>(d)];
    v.shape = {outer, v.size() / std::max<std::size_t>(outer, 1)};
    return v;
}

Value reshape(const Env& values, const Node& node)
{
    Value v = input(values, node, 0);
    const Value& spec = input(values, node, 1);
    if (!spec.is_int)
        throw op_error(node, "shape input must be int64");
    Shape out;
    std::ptrdiff_t infer = -1;
    std::size_t known = 1;
    for (std::size_t i = 0; i < spec.ints.size(); ++i) {
        std::int64_t d = spec.ints[i];
        if (d == 0 && node.attr_int("allowzero", 0) == 0)
            d = static_cast<std::int64_t>(v.shape.at(i));
        if (d == -1) {
            infer = static_cast<std::ptrdiff_t>(i);
            out.push_back(1);
            continue;
        }
        if (d < 0)
            throw op_error(node, "invalid dimension " + std::to_string(d));
        out.push_back(static_cast<std::size_t>(d));
        known *= static_cast<std::size_t>(d);
    }
    if (infer >= 0)
        out[static_cast<std::size_t>(infer)] = known ? v.size() / known : 0;
    if (element_count(out) != v.size())
        throw op_error(node, "cannot reshape " + shape_str(v.shape) + " to " + shape_str(out));
    v.shape = out;
    return v;
}

Value gemm(const Env& values, const Node& node)
{
    const Value& a = float_input(values, node, 0);
    const Value& b = float_input(values, node, 1);
    const Value* c = optional_input(values, node, 2);
    if (a.shape.size() != 2 || b.shape.size() != 2)
        throw op_error(node, "expected 2-D operands");
    const bool ta = node.attr_int("transA", 0) != 0, tb = node.attr_int("transB", 0) != 0;
    const float alpha = node.attr_float("alpha", 1.0f), beta = node.attr_float("beta", 1.0f);
    Eigen::Map<const MatrixRM> ma(a.floats.data(), a.shape[0], a.shape[1]);
    Eigen::Map<const MatrixRM> mb(b.floats.data(), b.shape[0], b.shape[1]);
    MatrixRM lhs = ta ? MatrixRM(ma.transpose()) : MatrixRM(ma);
    MatrixRM rhs = tb ? MatrixRM(mb.transpose()) : MatrixRM(mb);
    if (lhs.cols() != rhs.rows())
        throw op_error(node, "inner dimensions differ");
    MatrixRM y = alpha * (lhs * rhs);
    if (c) {
        const std::size_t rows = static_cast<std::size_t>(y.rows()), cols = static_cast<std::size_t>(y.cols());
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                float bias;
                if (c->size() == 1)
                    bias = c->floats[0];
                else if (c->size() == cols)
                    bias = c->floats[j];
                else if (c->size() == rows * cols)
                    bias = c->floats[i * cols + j];
                else if (c->size() == rows)
                    bias = c->floats[i];
                else
                    throw op_error(node, "bias not broadcastable");
                y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += beta * bias;
            }
    }
    return Value::from_floats({static_cast<std::size_t>(y.rows()), static_cast<std::size_t>(y.cols())},
                              AlignedVector<float>(y.data(), y.data() + y.size()));
}

Value relu(const Env& values, const Node& node)
{
    Value y = float_input(values, node, 0);
    for (float& v : y.floats)
        v = std::max(v, 0.0f);
    return y;
}

Value constant(const Node& node)
{
    const Attribute* a = node.attribute("value");
    if (a && a->tensor)
        return *a->tensor;
    if ((a = node.attribute("value_float")))
        return Value::from_floats({}, {a->f});
    if ((a = node.attribute("value_floats")))
        return Value::from_floats({a->floats.size()}, AlignedVector<float>(a->floats.begin(), a->floats.end()));
    if ((a = node.attribute("value_int")))
        return Value::from_ints({}, {a->i});
    if ((a = node.attribute("value_ints")))
        return Value::from_ints({a->ints.size()}, a->ints);
    throw op_error(node, "unsupported constant payload");
}

Value evaluate(const Env& values, const Node& node)
{
    if (!node.domain.empty() && node.domain != "ai.onnx")
        throw op_error(node, "unsupported domain '" + node.domain + "'");
    const std::string& op = node.op_type;
    if (op == "Conv")
        return conv(values, node);
    if (op == "BatchNormalization")
        return batch_norm(values, node);
    if (op == "Relu")
        return relu(values, node);
    if (op == "MaxPool")
        return pool(values, node, true);
    if (op == "AveragePool")
        return pool(values, node, false);
    if (op == "GlobalAveragePool")
        return global_average_pool(values, node);
    if (op == "Concat")
        return concat(values, node);
    if (op == "Add")
        return add(values, node);
    if (op == "Flatten")
        return flatten(values, node);
    if (op == "Reshape")
        return reshape(values, node);
    if (op == "Gemm")
        return gemm(values, node);
    if (op == "Identity" || op == "Dropout")
        return input(values, node, 0);
    if (op == "Constant")
        return constant(node);
    throw op_error(node, "unsupported operator");
}

} // namespace

Interpreter::Interpreter(Model model) : model_(std::move(model))
{
    for (std::size_t i = 0; i < model_.graph.nodes.size(); ++i)
        for (const auto& name : model_.graph.nodes[i].inputs)
            last_use_[name] = i;
    for (const auto& out : model_.graph.outputs)
        last_use_[out.name] = model_.graph.nodes.size();
}

std::map<std::string, Tensor<float>> Interpreter::run(const std::map<std::string, Tensor<float>>& inputs) const
{
    const Graph& g = model_.graph;
    ValueMap values;
    for (const auto& info : g.inputs) {
        auto it = inputs.find(info.name);
        if (it == inputs.end())
            throw std::runtime_error("onnx: missing graph input '" + info.name + "'");
        values[info.name] = Value::from_floats(it->second.shape(), it->second.storage());
    }
    const Env env{values, g.initializers};

    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const Node& node = g.nodes[i];
        Value out = evaluate(env, node);
        if (node.outputs.empty())
            throw op_error(node, "node has no outputs");
        values[node.outputs[0]] = std::move(out);

        for (const auto& name : node.inputs) {
            auto it = last_use_.find(name);
            if (it != last_use_.end() && it->second == i)
                values.erase(name);
        }
    }

    std::map<std::string, Tensor<float>> result;
    for (const auto& info : g.outputs) {
        const Value* v = env.find(info.name);
        if (!v)
            throw std::runtime_error("onnx: graph output '" + info.name + "' was never produced");
        if (v->is_int)
            throw std::runtime_error("onnx: graph output '" + info.name + "' is not float");
        result.emplace(info.name, Tensor<float>(v->shape, v->floats));
    }
    return result;
}

} // namespace plankton::onnx
