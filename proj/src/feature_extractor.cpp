#include "plankton/features/features.hpp"

#include <algorithm>
#include <stdexcept>

#include "plankton/hashing.hpp"

namespace plankton::features {

Shape layout_shape(Layout layout)
{
    switch (layout) {
    case Layout::raw: return {kFeatureChannels, kFeatureSide, kFeatureSide};
    case Layout::r1: return {30, 32, 32};
    case Layout::r2: return {3, 32, 320};
    case Layout::image: return {3, data::kInputSize, data::kInputSize};
    }
    throw std::invalid_argument("unknown layout");
}

std::string_view layout_name(Layout layout)
{
    switch (layout) {
    case Layout::raw: return "raw";
    case Layout::r1: return "r1";
    case Layout::r2: return "r2";
    case Layout::image: return "image";
    }
    return "?";
}

Layout parse_layout(std::string_view name)
{
    for (Layout l : {Layout::raw, Layout::r1, Layout::r2, Layout::image})
        if (layout_name(l) == name)
            return l;
    throw std::invalid_argument("unknown layout '" + std::string(name) + "' (expected raw, r1, r2 or image)");
}

ReshapedFeature reshape_features(const FeatureTensor& f, Layout layout)
{
    return reshape_features(ReshapedFeature{f.data, Layout::raw, f.source_id}, layout);
}

ReshapedFeature reshape_features(ReshapedFeature f, Layout layout)
{
    if (layout == Layout::image)
        throw std::invalid_argument("features cannot be reshaped to the image layout");
    if (f.data.size() != kFeatureElements)
        throw std::invalid_argument("feature tensor '" + f.source_id + "' has " + std::to_string(f.data.size())
                                    + " elements, expected " + std::to_string(kFeatureElements));
    f.data = std::move(f.data).reshaped(layout_shape(layout));
    f.layout = layout;
    return f;
}

FeatureExtractor::FeatureExtractor(const std::filesystem::path& model_path, std::size_t batch_size)
    : FeatureExtractor(onnx::load_model(model_path), sha256_file(model_path), batch_size)
{
}

FeatureExtractor::FeatureExtractor(onnx::Model model, std::string model_hash, std::size_t batch_size)
    : interpreter_(std::move(model)), model_hash_(std::move(model_hash)), batch_size_(std::max<std::size_t>(batch_size, 1))
{
    check_signature();
}

void FeatureExtractor::check_signature() const
{
    const auto& g = interpreter_.model().graph;
    auto matches = [](const std::vector<std::int64_t>& found, const std::vector<std::int64_t>& want) {
        if (found.size() != want.size())
            return false;
        for (std::size_t i = 0; i < want.size(); ++i)
            if (want[i] >= 0 && found[i] != want[i])
                return false;
        return true;
    };
    const std::vector<std::int64_t> want_in{-1, 3, static_cast<std::int64_t>(data::kInputSize),
                                            static_cast<std::int64_t>(data::kInputSize)};
    const std::vector<std::int64_t> want_out{-1, static_cast<std::int64_t>(kFeatureChannels),
                                             static_cast<std::int64_t>(kFeatureSide),
                                             static_cast<std::int64_t>(kFeatureSide)};
    if (g.inputs.size() != 1 || g.inputs[0].name != kInputName)
        throw std::runtime_error("feature model must have exactly one input named 'input'");
    if (!matches(g.inputs[0].dims, want_in))
        throw std::runtime_error("feature model input shape mismatch: expected " + onnx::dims_str(want_in)
                                 + ", found " + onnx::dims_str(g.inputs[0].dims));
    if (g.outputs.size() != 1 || g.outputs[0].name != kOutputName)
        throw std::runtime_error("feature model must have exactly one output named 'features'");
    if (!g.outputs[0].dims.empty() && !matches(g.outputs[0].dims, want_out))
        throw std::runtime_error("feature model output shape mismatch: expected " + onnx::dims_str(want_out)
                                 + ", found " + onnx::dims_str(g.outputs[0].dims));
}

std::vector<FeatureTensor> FeatureExtractor::extract(std::span<const data::ImageTensor> batch) const
{
    std::vector<FeatureTensor> out;
    out.reserve(batch.size());
    const Shape in_shape = layout_shape(Layout::image);
    for (std::size_t start = 0; start < batch.size(); start += batch_size_) {
        const std::size_t n = std::min(batch_size_, batch.size() - start);
        std::vector<Tensor<float>> chunk;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& img = batch[start + i];
            if (img.data.shape() != in_shape)
                throw std::invalid_argument("image tensor '" + img.source_id + "' has shape "
                                            + shape_str(img.data.shape()) + ", expected " + shape_str(in_shape));
            chunk.push_back(img.data);
        }
        auto result = interpreter_.run({{std::string(kInputName), stack<float>(chunk)}});
        const Tensor<float>& feats = result.at(std::string(kOutputName));
        const Shape want{n, kFeatureChannels, kFeatureSide, kFeatureSide};
        if (feats.shape() != want)
            throw std::runtime_error("feature model produced shape " + shape_str(feats.shape()) + ", expected "
                                     + shape_str(want));
        for (std::size_t i = 0; i < n; ++i) {
            auto s = feats.sample(i);
            out.push_back({Tensor<float>(layout_shape(Layout::raw), std::vector<float>(s.begin(), s.end())),
                           batch[start + i].source_id});
        }
    }
    return out;
}

} // namespace plankton::features
