#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "plankton/tensor.hpp"

namespace plankton::nn {

/// Single-file container of named float32 arrays.
///
/// Layout (all integers little-endian):
///   bytes 0..7   magic "PKCKPT01"
///   bytes 8..15  u64 header length H
///   next H bytes UTF-8 JSON: {"meta": {...}, "arrays": [{"name", "shape",
///                "offset", "nbytes"}, ...]} with offsets relative to the
///                start of the payload
///   payload      float32 values, C order, arrays back to back
struct NamedArray
{
    std::string name;
    Tensor<float> data;
};

struct Checkpoint
{
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedArray> arrays;

    const NamedArray& find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace plankton::nn
