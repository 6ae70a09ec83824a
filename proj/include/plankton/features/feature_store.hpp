#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "plankton/features/features.hpp"

namespace plankton::features {

/// On-disk cache of feature tensors: one NPY file per sample plus
/// `index.json`:
///
///     {"metadata": {"model_hash": ..., "layout": "r2"},
///      "entries": {source_id: {"file": ..., "sha256": ..., "layout": ...}}}
///
/// Metadata is pinned when the store is created. Single writer, many readers.
class FeatureStore
{
public:
    struct Entry
    {
        std::string file;
        std::string sha256;
        Layout layout = Layout::raw;
    };

    /// Opens an existing store, or creates one with the given metadata.
    /// Opening with metadata that differs from the pinned one is an error.
    static FeatureStore open_or_create(const std::filesystem::path& root, Layout layout,
                                       const std::string& model_hash);
    /// Opens an existing store; throws if there is none.
    static FeatureStore open(const std::filesystem::path& root);

    void store(std::span<const ReshapedFeature> items);

    /// Loads in request order. Verifies checksum and layout of every entry.
    std::vector<ReshapedFeature> load(std::span<const std::string> source_ids, Layout requested) const;

    bool contains(const std::string& source_id) const { return index_.contains(source_id); }
    std::size_t size() const noexcept { return index_.size(); }
    Layout layout() const noexcept { return layout_; }
    const std::string& model_hash() const noexcept { return model_hash_; }
    const std::filesystem::path& root() const noexcept { return root_; }
    const std::map<std::string, Entry>& index() const noexcept { return index_; }

    /// Sum of payload file sizes in bytes.
    std::uintmax_t payload_bytes() const;

private:
    FeatureStore(std::filesystem::path root, Layout layout, std::string model_hash);
    void write_index() const;

    std::filesystem::path root_;
    Layout layout_;
    std::string model_hash_;
    std::map<std::string, Entry> index_;
};

} // namespace plankton::features
