#pragma once

#include <cstdint>
#include <filesystem>

#include "plankton/experiment/config.hpp"

namespace plankton::experiment {

struct SmokeOptions
{
    std::size_t classes = 3;
    std::size_t per_class = 20;
    double noise = 0.1; // relative to the class-mean spread
    std::uint64_t seed = 7;
};

/// Writes a tiny synthetic dataset under `root`: solid-colour PNGs, a
/// manifest, a feature store pre-filled with well separated Gaussian feature
/// blobs (one per class) and a matching experiment config. Returns the
/// config path.
std::filesystem::path make_smoke_dataset(const std::filesystem::path& root, const SmokeOptions& options = {});

/// The config written by make_smoke_dataset: VAE, r1, Z = 10, 50 epochs.
ExperimentConfig smoke_config(const std::filesystem::path& root);

} // namespace plankton::experiment
