#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plankton/data/image.hpp"
#include "plankton/features/onnx.hpp"
#include "plankton/tensor.hpp"

namespace plankton::features {

inline constexpr std::size_t kFeatureChannels = 1920;
inline constexpr std::size_t kFeatureSide = 4;
inline constexpr std::size_t kFeatureElements = kFeatureChannels * kFeatureSide * kFeatureSide; // 30720

/// Storage/training layouts. `raw` is the extractor's (1920,4,4); r1/r2 are
/// relabelings of the same 30720 values; `image` is the pixel-input path
/// (3,128,128) used for comparison runs.
enum class Layout { raw, r1, r2, image };

Shape layout_shape(Layout layout);
std::string_view layout_name(Layout layout);
Layout parse_layout(std::string_view name);

struct FeatureTensor
{
    Tensor<float> data; // (1920, 4, 4)
    std::string source_id;
};

struct ReshapedFeature
{
    Tensor<float> data;
    Layout layout = Layout::raw;
    std::string source_id;
};

/// Row-major relabeling of the 30720 extracted values into `layout`.
ReshapedFeature reshape_features(const FeatureTensor& f, Layout layout);
ReshapedFeature reshape_features(ReshapedFeature f, Layout layout);

/// Frozen backbone wrapper enforcing the input `input` (N,3,128,128) ->
/// output `features` (N,1920,4,4) contract.
class FeatureExtractor
{
public:
    static constexpr std::string_view kInputName = "input";
    static constexpr std::string_view kOutputName = "features";

    explicit FeatureExtractor(const std::filesystem::path& model_path, std::size_t batch_size = 16);
    explicit FeatureExtractor(onnx::Model model, std::string model_hash = {}, std::size_t batch_size = 16);

    /// One FeatureTensor per input, order preserved.
    std::vector<FeatureTensor> extract(std::span<const data::ImageTensor> batch) const;

    const std::string& model_hash() const noexcept { return model_hash_; }

private:
    void check_signature() const;

    onnx::Interpreter interpreter_;
    std::string model_hash_;
    std::size_t batch_size_;
};

} // namespace plankton::features
