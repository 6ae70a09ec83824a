#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace plankton::data {

enum class SplitHint { none, train, test };

struct ManifestEntry
{
    std::filesystem::path image_path; // resolved against the manifest directory
    std::string source_id;            // path as written in the manifest
    std::string label;
    SplitHint split = SplitHint::none;
};

struct Manifest
{
    std::string dataset_name; // file stem, or the directory name for manifest.csv
    std::vector<ManifestEntry> entries;
    std::vector<std::string> classes; // sorted, unique

    /// Index of each entry's label in `classes`.
    std::vector<int> class_ids() const;
    int class_id(const std::string& label) const;
    bool fully_hinted() const;
};

struct ManifestOptions
{
    bool check_images_exist = true;
};

/// Reads the `path,label,split` CSV. Errors name the offending line or path.
Manifest load_manifest(const std::filesystem::path& path, ManifestOptions options = {});

/// Writes a manifest back to CSV with paths relative to `path`'s directory.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Splits one CSV record (RFC 4180 quoting).
std::vector<std::string> split_csv_line(const std::string& line);

} // namespace plankton::data
