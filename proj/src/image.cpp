#include "plankton/data/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plankton::data {

Image decode_image(const std::filesystem::path& path)
{
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty())
        throw std::runtime_error("cannot decode image: " + path.string());
    if (mat.depth() == CV_16U)
        mat.convertTo(mat, CV_8U, 1.0 / 257.0);
    else if (mat.depth() != CV_8U)
        mat.convertTo(mat, CV_8U);

    Image img;
    img.width = static_cast<std::size_t>(mat.cols);
    img.height = static_cast<std::size_t>(mat.rows);
    const int src_channels = mat.channels();
    img.channels = src_channels == 1 ? 1 : 3;
    img.pixels.resize(img.width * img.height * img.channels);
    for (int y = 0; y < mat.rows; ++y) {
        const std::uint8_t* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) {
            const std::uint8_t* px = row + x * src_channels;
            float* dst = &img.pixels[(y * img.width + x) * img.channels];
            if (img.channels == 1) {
                dst[0] = px[0];
            } else if (src_channels == 2) { // gray + alpha
                dst[0] = dst[1] = dst[2] = px[0];
            } else { // BGR(A) -> RGB
                dst[0] = px[2];
                dst[1] = px[1];
                dst[2] = px[0];
            }
        }
    }
    return img;
}

void write_image(const std::filesystem::path& path, const Image& image)
{
    const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
    cv::Mat mat(static_cast<int>(image.height), static_cast<int>(image.width), type);
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x) {
            std::uint8_t* dst = mat.ptr<std::uint8_t>(static_cast<int>(y)) + x * image.channels;
            for (std::size_t c = 0; c < image.channels; ++c)
                dst[c] = cv::saturate_cast<std::uint8_t>(
                    image.at(y, x, image.channels == 1 ? 0 : 2 - c));
        }
    if (!cv::imwrite(path.string(), mat))
        throw std::runtime_error("cannot write image: " + path.string());
}

std::vector<float> resize_bilinear(const std::vector<float>& plane, std::size_t width,
                                   std::size_t height, std::size_t out_width, std::size_t out_height)
{
    if (width == 0 || height == 0 || plane.size() != width * height)
        throw std::invalid_argument("resize_bilinear: plane does not match its dimensions");

    struct Tap
    {
        std::size_t lo, hi;
        float frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            const std::size_t hi = std::min(lo + 1, in - 1);
            t[i] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
        }
        return t;
    };
    const auto xs = taps(width, out_width);
    const auto ys = taps(height, out_height);

    std::vector<float> out(out_width * out_height);
    for (std::size_t oy = 0; oy < out_height; ++oy) {
        const Tap ty = ys[oy];
        const float* r0 = &plane[ty.lo * width];
        const float* r1 = &plane[ty.hi * width];
        for (std::size_t ox = 0; ox < out_width; ++ox) {
            const Tap tx = xs[ox];
            const float top = r0[tx.lo] + (r0[tx.hi] - r0[tx.lo]) * tx.frac;
            const float bottom = r1[tx.lo] + (r1[tx.hi] - r1[tx.lo]) * tx.frac;
            out[oy * out_width + ox] = top + (bottom - top) * ty.frac;
        }
    }
    return out;
}

ImageTensor preprocess(const Image& image, std::string source_id)
{
    if (image.width == 0 || image.height == 0)
        throw std::invalid_argument("preprocess: empty image " + source_id);
    if (image.channels != 1 && image.channels != 3)
        throw std::invalid_argument("preprocess: unsupported channel count "
                                    + std::to_string(image.channels));

    constexpr std::size_t n = kInputSize;
    Tensor<float> out({3, n, n});
    std::vector<float> plane(image.width * image.height);
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src_c = image.channels == 1 ? 0 : c;
        for (std::size_t i = 0; i < plane.size(); ++i)
            plane[i] = image.pixels[i * image.channels + src_c];
        const auto resized = resize_bilinear(plane, image.width, image.height, n, n);
        float* dst = out.data() + c * n * n;
        for (std::size_t i = 0; i < n * n; ++i)
            dst[i] = (resized[i] / 255.0f - kChannelMean[c]) / kChannelStd[c];
    }
    return {std::move(out), std::move(source_id)};
}

} // namespace plankton::data
