#pragma once

// Minimal ONNX model reader and CPU interpreter. Covers the operator set of
// exported torchvision classification backbones (DenseNet, ResNet, VGG):
// Conv, BatchNormalization, Relu, MaxPool, AveragePool, GlobalAveragePool,
// Concat, Add, Flatten, Reshape, Gemm, Identity, Dropout, Constant.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plankton/tensor.hpp"

namespace plankton::onnx {

enum class DataType : std::int32_t { undefined = 0, float32 = 1, int32 = 6, int64 = 7, float64 = 11 };

/// Either float or int64 payload; ints are kept for shape-carrying tensors.
struct Value
{
    Shape shape;
    AlignedVector<float> floats;
    std::vector<std::int64_t> ints;
    bool is_int = false;

    static Value from_floats(Shape shape, AlignedVector<float> data);
    static Value from_ints(Shape shape, std::vector<std::int64_t> data);
    std::size_t size() const { return element_count(shape); }
};

struct Attribute
{
    std::string name;
    float f = 0.0f;
    std::int64_t i = 0;
    std::string s;
    std::vector<float> floats;
    std::vector<std::int64_t> ints;
    std::optional<Value> tensor;
};

struct Node
{
    std::string name;
    std::string op_type;
    std::string domain;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<Attribute> attributes;

    const Attribute* attribute(const std::string& key) const;
    std::int64_t attr_int(const std::string& key, std::int64_t fallback) const;
    float attr_float(const std::string& key, float fallback) const;
    std::string attr_string(const std::string& key, const std::string& fallback) const;
    std::vector<std::int64_t> attr_ints(const std::string& key, std::vector<std::int64_t> fallback) const;
};

/// Declared graph input/output. Symbolic dimensions are reported as -1.
struct ValueInfo
{
    std::string name;
    std::vector<std::int64_t> dims;
};

struct Graph
{
    std::string name;
    std::vector<Node> nodes;
    std::map<std::string, Value> initializers;
    std::vector<ValueInfo> inputs; // excludes initializers
    std::vector<ValueInfo> outputs;
};

struct Model
{
    std::int64_t ir_version = 0;
    std::map<std::string, std::int64_t> opsets; // domain -> version ("" is the default domain)
    Graph graph;
};

/// Parses a serialized ModelProto. Throws std::runtime_error on malformed
/// input or unsupported features (external data, non-float tensors other
/// than int32/int64).
Model parse_model(std::span<const std::uint8_t> bytes);
Model load_model(const std::filesystem::path& path);

std::string dims_str(const std::vector<std::int64_t>& dims);

/// Executes a parsed graph node by node in file order.
class Interpreter
{
public:
    explicit Interpreter(Model model);

    const Model& model() const noexcept { return model_; }

    /// Runs the graph on float inputs keyed by input name and returns every
    /// declared graph output.
    std::map<std::string, Tensor<float>> run(const std::map<std::string, Tensor<float>>& inputs) const;

private:
    Model model_;
    std::map<std::string, std::size_t> last_use_;
};

} // namespace plankton::onnx
