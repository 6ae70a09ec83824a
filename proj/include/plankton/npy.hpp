#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "plankton/tensor.hpp"

namespace plankton::npy {

/// NPY v1.0 container, little-endian float32, C order.
std::vector<std::uint8_t> encode(std::span<const float> values, const Shape& shape);

/// Accepts '<f4' and '<f8' payloads (the latter narrowed to float), C order only.
Tensor<float> decode(std::span<const std::uint8_t> bytes);

void write(const std::filesystem::path& path, std::span<const float> values, const Shape& shape);
inline void write(const std::filesystem::path& path, const Tensor<float>& t)
{
    write(path, t.values(), t.shape());
}
Tensor<float> read(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace plankton::npy
