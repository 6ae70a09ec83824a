// Protobuf wire-format decoding of the ONNX messages we need. Field numbers
// follow onnx.proto (IR version 3 and later).

#include "plankton/features/onnx.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace plankton::onnx {
namespace {

enum WireType : std::uint32_t { kVarint = 0, kFixed64 = 1, kLengthDelimited = 2, kFixed32 = 5 };

class Reader
{
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : data_(bytes) {}

    bool done() const { return pos_ >= data_.size(); }

    std::uint64_t varint()
    {
        std::uint64_t result = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            if (pos_ >= data_.size())
                throw std::runtime_error("onnx: truncated varint");
            const std::uint8_t b = data_[pos_++];
            result |= static_cast<std::uint64_t>(b & 0x7f) << shift;
            if (!(b & 0x80))
                return result;
        }
        throw std::runtime_error("onnx: varint too long");
    }

    std::pair<std::uint32_t, WireType> tag()
    {
        const std::uint64_t t = varint();
        return {static_cast<std::uint32_t>(t >> 3), static_cast<WireType>(t & 7)};
    }

    std::span<const std::uint8_t> bytes()
    {
        const std::uint64_t n = varint();
        if (n > data_.size() - pos_)
            throw std::runtime_error("onnx: length-delimited field overruns message");
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::string string()
    {
        auto b = bytes();
        return std::string(reinterpret_cast<const char*>(b.data()), b.size());
    }

    std::uint32_t fixed32()
    {
        if (data_.size() - pos_ < 4)
            throw std::runtime_error("onnx: truncated fixed32");
        std::uint32_t v;
        std::memcpy(&v, data_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }

    std::uint64_t fixed64()
    {
        if (data_.size() - pos_ < 8)
            throw std::runtime_error("onnx: truncated fixed64");
        std::uint64_t v;
        std::memcpy(&v, data_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }

    float float32()
    {
        const std::uint32_t bits = fixed32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }

    void skip(WireType type)
    {
        switch (type) {
        case kVarint: varint(); break;
        case kFixed64: fixed64(); break;
        case kLengthDelimited: bytes(); break;
        case kFixed32: fixed32(); break;
        default: throw std::runtime_error("onnx: unsupported wire type " + std::to_string(type));
        }
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

// Repeated scalar fields may arrive packed or one-per-tag.
void read_int64s(Reader& r, WireType type, std::vector<std::int64_t>& out)
{
    if (type == kLengthDelimited) {
        Reader packed(r.bytes());
        while (!packed.done())
            out.push_back(static_cast<std::int64_t>(packed.varint()));
    } else {
        out.push_back(static_cast<std::int64_t>(r.varint()));
    }
}

void read_floats(Reader& r, WireType type, std::vector<float>& out)
{
    if (type == kLengthDelimited) {
        Reader packed(r.bytes());
        while (!packed.done())
            out.push_back(packed.float32());
    } else {
        out.push_back(r.float32());
    }
}

void read_doubles(Reader& r, WireType type, std::vector<float>& out)
{
    auto one = [](Reader& rr) {
        const std::uint64_t bits = rr.fixed64();
        double d;
        std::memcpy(&d, &bits, 8);
        return static_cast<float>(d);
    };
    if (type == kLengthDelimited) {
        Reader packed(r.bytes());
        while (!packed.done())
            out.push_back(one(packed));
    } else {
        out.push_back(one(r));
    }
}

Value parse_tensor(std::span<const std::uint8_t> msg, std::string* name_out = nullptr)
{
    Reader r(msg);
    std::vector<std::int64_t> dims;
    std::int32_t data_type = 0;
    std::vector<float> floats;
    std::vector<std::int64_t> ints;
    std::span<const std::uint8_t> raw;
    bool has_raw = false;
    bool external = false;
    std::string name;
    while (!r.done()) {
        auto [field, type] = r.tag();
        switch (field) {
        case 1: read_int64s(r, type, dims); break;
        case 2: data_type = static_cast<std::int32_t>(r.varint()); break;
        case 4: read_floats(r, type, floats); break;
        case 5: read_int64s(r, type, ints); break; // int32_data, varint-encoded
        case 7: read_int64s(r, type, ints); break;
        case 8: name = r.string(); break;
        case 9: raw = r.bytes(); has_raw = true; break;
        case 10: read_doubles(r, type, floats); break;
        case 13: external = true; r.skip(type); break;
        case 14: external = external || r.varint() == 1; break;
        default: r.skip(type);
        }
    }
    if (name_out)
        *name_out = name;
    if (external)
        throw std::runtime_error("onnx: tensor '" + name + "' uses external data, which is not supported");

    Shape shape;
    for (auto d : dims) {
        if (d < 0)
            throw std::runtime_error("onnx: negative dimension in tensor '" + name + "'");
        shape.push_back(static_cast<std::size_t>(d));
    }
    const std::size_t count = element_count(shape);

    switch (static_cast<DataType>(data_type)) {
    case DataType::float32:
        if (has_raw) {
            if (raw.size() != count * 4)
                throw std::runtime_error("onnx: raw_data size mismatch in '" + name + "'");
            floats.resize(count);
            std::memcpy(floats.data(), raw.data(), raw.size());
        }
        break;
    case DataType::float64:
        if (has_raw) {
            if (raw.size() != count * 8)
                throw std::runtime_error("onnx: raw_data size mismatch in '" + name + "'");
            floats.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                double d;
                std::memcpy(&d, raw.data() + 8 * i, 8);
                floats[i] = static_cast<float>(d);
            }
        }
        break;
    case DataType::int64:
        if (has_raw) {
            if (raw.size() != count * 8)
                throw std::runtime_error("onnx: raw_data size mismatch in '" + name + "'");
            ints.resize(count);
            std::memcpy(ints.data(), raw.data(), raw.size());
        }
        return Value::from_ints(std::move(shape), std::move(ints));
    case DataType::int32:
        if (has_raw) {
            if (raw.size() != count * 4)
                throw std::runtime_error("onnx: raw_data size mismatch in '" + name + "'");
            ints.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                std::int32_t v;
                std::memcpy(&v, raw.data() + 4 * i, 4);
                ints[i] = v;
            }
        }
        return Value::from_ints(std::move(shape), std::move(ints));
    default:
        throw std::runtime_error("onnx: tensor '" + name + "' has unsupported data type "
                                 + std::to_string(data_type));
    }
    if (floats.size() != count)
        throw std::runtime_error("onnx: tensor '" + name + "' holds " + std::to_string(floats.size())
                                 + " values for shape " + shape_str(shape));
    return Value::from_floats(std::move(shape), AlignedVector<float>(floats.begin(), floats.end()));
}

Attribute parse_attribute(std::span<const std::uint8_t> msg)
{
    Reader r(msg);
    Attribute a;
    while (!r.done()) {
        auto [field, type] = r.tag();
        switch (field) {
        case 1: a.name = r.string(); break;
        case 2: a.f = r.float32(); break;
        case 3: a.i = static_cast<std::int64_t>(r.varint()); break;
        case 4: a.s = r.string(); break;
        case 5: a.tensor = parse_tensor(r.bytes()); break;
        case 7: read_floats(r, type, a.floats); break;
        case 8: read_int64s(r, type, a.ints); break;
        default: r.skip(type);
        }
    }
    return a;
}

Node parse_node(std::span<const std::uint8_t> msg)
{
    Reader r(msg);
    Node n;
    while (!r.done()) {
        auto [field, type] = r.tag();
        switch (field) {
        case 1: n.inputs.push_back(r.string()); break;
        case 2: n.outputs.push_back(r.string()); break;
        case 3: n.name = r.string(); break;
        case 4: n.op_type = r.string(); break;
        case 5: n.attributes.push_back(parse_attribute(r.bytes())); break;
        case 7: n.domain = r.string(); break;
        default: r.skip(type);
        }
    }
    return n;
}

std::vector<std::int64_t> parse_shape(std::span<const std::uint8_t> msg)
{
    Reader r(msg);
    std::vector<std::int64_t> dims;
    while (!r.done()) {
        auto [field, type] = r.tag();
        if (field != 1) {
            r.skip(type);
            continue;
        }
        Reader dim(r.bytes());
        std::int64_t value = -1;
        while (!dim.done()) {
            auto [f, t] = dim.tag();
            if (f == 1)
                value = static_cast<std::int64_t>(dim.varint());
            else
                dim.skip(t);
        }
        dims.push_back(value);
    }
    return dims;
}

ValueInfo parse_value_info(std::span<const std::uint8_t> msg)
{
    Reader r(msg);
    ValueInfo info;
    while (!r.done()) {
        auto [field, type] = r.tag();
        if (field == 1) {
            info.name = r.string();
        } else if (field == 2) { // TypeProto
            Reader tp(r.bytes());
            while (!tp.done()) {
                auto [f, t] = tp.tag();
                if (f != 1) { // tensor_type
                    tp.skip(t);
                    continue;
                }
                Reader tt(tp.bytes());
                while (!tt.done()) {
                    auto [ff, ft] = tt.tag();
                    if (ff == 2)
                        info.dims = parse_shape(tt.bytes());
                    else
                        tt.skip(ft);
                }
            }
        } else {
            r.skip(type);
        }
    }
    return info;
}

Graph parse_graph(std::span<const std::uint8_t> msg)
{
    Reader r(msg);
    Graph g;
    std::vector<ValueInfo> declared_inputs;
    while (!r.done()) {
        auto [field, type] = r.tag();
        switch (field) {
        case 1: g.nodes.push_back(parse_node(r.bytes())); break;
        case 2: g.name = r.string(); break;
        case 5: {
            std::string name;
            Value v = parse_tensor(r.bytes(), &name);
            g.initializers.insert_or_assign(name, std::move(v));
            break;
        }
        case 11: declared_inputs.push_back(parse_value_info(r.bytes())); break;
        case 12: g.outputs.push_back(parse_value_info(r.bytes())); break;
        default: r.skip(type);
        }
    }
    for (auto& in : declared_inputs)
        if (!g.initializers.contains(in.name))
            g.inputs.push_back(std::move(in));
    return g;
}

} // namespace

Value Value::from_floats(Shape shape, AlignedVector<float> data)
{
    Value v;
    v.shape = std::move(shape);
    v.floats = std::move(data);
    return v;
}

Value Value::from_ints(Shape shape, std::vector<std::int64_t> data)
{
    Value v;
    v.shape = std::move(shape);
    v.ints = std::move(data);
    v.is_int = true;
    if (v.ints.size() != element_count(v.shape))
        throw std::runtime_error("onnx: int tensor size does not match shape " + shape_str(v.shape));
    return v;
}

const Attribute* Node::attribute(const std::string& key) const
{
    for (const auto& a : attributes)
        if (a.name == key)
            return &a;
    return nullptr;
}

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const
{
    const Attribute* a = attribute(key);
    return a ? a->i : fallback;
}

float Node::attr_float(const std::string& key, float fallback) const
{
    const Attribute* a = attribute(key);
    return a ? a->f : fallback;
}

std::string Node::attr_string(const std::string& key, const std::string& fallback) const
{
    const Attribute* a = attribute(key);
    return a ? a->s : fallback;
}

std::vector<std::int64_t> Node::attr_ints(const std::string& key, std::vector<std::int64_t> fallback) const
{
    const Attribute* a = attribute(key);
    return a ? a->ints : fallback;
}

std::string dims_str(const std::vector<std::int64_t>& dims)
{
    std::string out = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i)
            out += ",";
        out += dims[i] < 0 ? std::string("?") : std::to_string(dims[i]);
    }
    return out + ")";
}

Model parse_model(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    Model m;
    bool has_graph = false;
    while (!r.done()) {
        auto [field, type] = r.tag();
        switch (field) {
        case 1: m.ir_version = static_cast<std::int64_t>(r.varint()); break;
        case 7:
            m.graph = parse_graph(r.bytes());
            has_graph = true;
            break;
        case 8: {
            Reader op(r.bytes());
            std::string domain;
            std::int64_t version = 0;
            while (!op.done()) {
                auto [f, t] = op.tag();
                if (f == 1)
                    domain = op.string();
                else if (f == 2)
                    version = static_cast<std::int64_t>(op.varint());
                else
                    op.skip(t);
            }
            m.opsets[domain] = version;
            break;
        }
        default: r.skip(type);
        }
    }
    if (!has_graph)
        throw std::runtime_error("onnx: model has no graph");
    return m;
}

Model load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("onnx model not found: " + path.string());
    std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
    try {
        return parse_model(bytes);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

} // namespace plankton::onnx
