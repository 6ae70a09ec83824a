#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plankton/cluster/fuzzy_cmeans.hpp"
#include "plankton/embed/embedder.hpp"
#include "plankton/metrics/metrics.hpp"
#include "plankton/supervised/fc.hpp"

namespace plankton::experiment {

enum class SupervisedHeads { none, ridge, fc, both };

std::string_view heads_name(SupervisedHeads h);
SupervisedHeads parse_heads(std::string_view s);

struct RidgeGrid
{
    int lambda_lo = -6, lambda_hi = 2; // log10 exponents, inclusive
    int gamma_lo = -4, gamma_hi = 1;
    bool center_targets = false;
};

/// Everything one experiment needs. Relative paths in the JSON file are
/// resolved against the file's directory.
///
///     {"name": "lensless_vae_r2_z500",
///      "manifest": "data/lensless/manifest.csv",
///      "onnx_model": "models/densenet201_features.onnx",
///      "feature_store": "cache/lensless",
///      "output_dir": "runs/lensless_vae_r2_z500",
///      "layout": "r2", "variant": "VAE", "latent_dim": 500,
///      "embedder": {"epochs": 100, "batch_size": 64},
///      "clustering": {"m": 2.0, "tol": 1e-5, "max_iter": 300},
///      "repeats": 5, "folds": 5, "seeds": [0, 1, 2, 3, 4],
///      "test_ratio": 0.2, "split_seed": 0,
///      "supervised": "ridge"}
struct ExperimentConfig
{
    std::string name;
    std::filesystem::path manifest;
    std::filesystem::path onnx_model;    // optional for r1/r2 if the store is complete
    std::filesystem::path feature_store; // default: <output_dir>/features
    std::filesystem::path output_dir;

    embed::EmbedderConfig embedder; // variant, layout, latent_dim and training knobs
    cluster::FuzzyConfig clustering; // n_clusters 0 means the number of classes
    metrics::OverlapOptions overlap;

    int repeats = 5;
    int folds = 5;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    double test_ratio = 0.2;
    std::uint64_t split_seed = 0;

    SupervisedHeads supervised = SupervisedHeads::none;
    RidgeGrid ridge;
    supervised::FcConfig fc;

    std::size_t extract_batch = 16;

    void validate() const;

    /// Canonical JSON snapshot with absolute paths; reloadable from anywhere.
    nlohmann::json snapshot() const;
    /// sha256 of the snapshot's compact serialization.
    std::string hash() const;
};

/// `base` resolves relative paths; pass the config file's directory.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

std::string config_hash(const nlohmann::json& snapshot);

} // namespace plankton::experiment
