#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace plankton::experiment {

struct LatentTable
{
    std::vector<std::string> ids;
    std::vector<std::string> labels;
    std::vector<std::string> splits; // train / validation / test; may be empty
    std::vector<std::vector<float>> rows;

    std::size_t dim() const { return rows.empty() ? 0 : rows.front().size(); }
};

/// NPY matrix (N, Z) plus a JSON sidecar with ids, labels and splits.
void save_latents(const LatentTable& t, const std::filesystem::path& npy_path);
LatentTable load_latents(const std::filesystem::path& npy_path);

/// `source_id,class_label,z_1,...,z_Z`, values printed round-trip exact.
void write_latents_csv(const LatentTable& t, const std::filesystem::path& path);
LatentTable read_latents_csv(const std::filesystem::path& path);

/// Writes the latents of one repeat of a saved record as CSV.
void export_latents(const std::filesystem::path& record_path, int repeat, const std::filesystem::path& csv_path);

} // namespace plankton::experiment
