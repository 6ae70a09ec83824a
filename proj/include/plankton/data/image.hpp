#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plankton/tensor.hpp"

namespace plankton::data {

/// Decoded image, interleaved HWC, RGB channel order (1 or 3 channels),
/// intensities on the 0..255 scale.
struct Image
{
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<float> pixels;

    float at(std::size_t y, std::size_t x, std::size_t c) const
    {
        return pixels[(y * width + x) * channels + c];
    }
};

/// Network input: (3, 128, 128) float tensor, ImageNet-normalized.
struct ImageTensor
{
    Tensor<float> data;
    std::string source_id;
};

inline constexpr std::size_t kInputSize = 128;
inline constexpr std::array<float, 3> kChannelMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kChannelStd{0.229f, 0.224f, 0.225f};

/// Decodes any format OpenCV understands. Alpha is dropped, 16-bit depth is
/// scaled to 8 bits.
Image decode_image(const std::filesystem::path& path);

/// Writes an image (PNG when the extension says so).
void write_image(const std::filesystem::path& path, const Image& image);

/// Bilinear resize with half-pixel centers and edge clamping, one plane at a
/// time. `plane` is row-major (height x width).
std::vector<float> resize_bilinear(const std::vector<float>& plane, std::size_t width,
                                   std::size_t height, std::size_t out_width, std::size_t out_height);

/// Resize to 128x128, replicate grayscale to RGB, scale to [0,1] and
/// standardize with the ImageNet channel statistics.
ImageTensor preprocess(const Image& image, std::string source_id = {});

} // namespace plankton::data
