#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "plankton/data/manifest.hpp"
#include "plankton/data/splits.hpp"
#include "plankton/experiment/config.hpp"
#include "plankton/metrics/metrics.hpp"

namespace plankton::experiment {

/// Error tagged with the pipeline stage and, when known, the repeat index.
class StageError : public std::runtime_error
{
public:
    StageError(std::string stage, int repeat, const std::string& what);
    const std::string& stage() const noexcept { return stage_; }
    int repeat() const noexcept { return repeat_; }

private:
    std::string stage_;
    int repeat_;
};

/// Network inputs for every manifest entry, in manifest order. r1/r2 come
/// from the feature store (filled from the ONNX model for missing ids);
/// `image` decodes and normalizes the pixels.
struct SampleSet
{
    std::vector<Tensor<float>> samples;
    double extraction_seconds = 0.0;
    std::size_t extracted = 0; // ids newly run through the backbone
};

SampleSet load_samples(const ExperimentConfig& config, const data::Manifest& manifest, std::ostream* log = nullptr);

/// Fills `store_root` with raw features for every manifest entry missing there.
std::size_t extract_to_store(const data::Manifest& manifest, const std::filesystem::path& model_path,
                             const std::filesystem::path& store_root, std::size_t batch_size,
                             std::ostream* log = nullptr);

struct RepeatResult
{
    int index = 0;
    std::uint64_t seed = 0;
    std::size_t validation_fold = 0;
    double purity = 0.0;            // test set, frozen centroids
    int overlaps = 0;
    double validation_purity = 0.0; // held-out fold, frozen centroids
    double train_purity = 0.0;      // fit set
    int cluster_iterations = 0;
    std::optional<double> ridge_accuracy;
    std::optional<double> fc_accuracy;
    nlohmann::json ridge_search;    // chosen lambda/gamma and grid
    std::map<std::string, double> stage_seconds;
    std::map<std::string, std::string> artifacts;
};

struct ExperimentRecord
{
    nlohmann::json config; // snapshot
    std::string config_hash;
    std::string dataset;
    std::string algorithm; // e.g. FE_r2-VAE
    std::size_t latent_dim = 0;
    std::size_t n_classes = 0;
    std::vector<RepeatResult> repeats;
    std::map<std::string, metrics::MetricSummary> summary; // purity, overlaps, ridge_accuracy, ...
    double wall_clock_seconds = 0.0;
    std::map<std::string, double> stage_seconds; // summed over repeats, extraction once
    std::string created;                         // UTC timestamp
    std::string error;                           // set on partial records

    bool hash_matches() const;
};

/// "FE_r2-VAE", "IMG-AE", ...
std::string algorithm_name(features::Layout layout, embed::Variant variant);

/// Full protocol: fixed train/test split, per repeat redrawn folds, embedder
/// trained on the training folds, fuzzy c-means fit there and applied with
/// frozen centroids to the held-out fold and the test set. Persists
/// record.json, per-repeat checkpoints, test labels and latents under
/// output_dir. Partial records are written before a StageError escapes.
ExperimentRecord run(const ExperimentConfig& config, std::ostream* log = nullptr);

nlohmann::json to_json(const ExperimentRecord& r);
ExperimentRecord record_from_json(const nlohmann::json& j);
void save_record(const ExperimentRecord& r, const std::filesystem::path& path);
ExperimentRecord load_record(const std::filesystem::path& path);

/// "0.98 ± 0.02 (0 ± 0)"
std::string format_cell(const ExperimentRecord& r);
/// "<dataset> <algorithm> Z=<z>: <cell>"
std::string format_row(const ExperimentRecord& r);

} // namespace plankton::experiment
