#include "plankton/features/feature_store.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "plankton/hashing.hpp"
#include "plankton/npy.hpp"

namespace plankton::features {
namespace {

constexpr const char* kIndexName = "index.json";

std::string file_name(std::size_t ordinal)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%07zu.npy", ordinal);
    return buf;
}

} // namespace

FeatureStore::FeatureStore(std::filesystem::path root, Layout layout, std::string model_hash)
    : root_(std::move(root)), layout_(layout), model_hash_(std::move(model_hash))
{
}

FeatureStore FeatureStore::open(const std::filesystem::path& root)
{
    const auto index_path = root / kIndexName;
    std::ifstream in(index_path);
    if (!in)
        throw std::runtime_error("no feature store at " + root.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(index_path.string() + ": " + e.what());
    }
    const auto& meta = j.at("metadata");
    FeatureStore s(root, parse_layout(meta.at("layout").get<std::string>()),
                   meta.at("model_hash").get<std::string>());
    for (const auto& [id, e] : j.at("entries").items())
        s.index_[id] = Entry{e.at("file").get<std::string>(), e.at("sha256").get<std::string>(),
                             parse_layout(e.at("layout").get<std::string>())};
    return s;
}

FeatureStore FeatureStore::open_or_create(const std::filesystem::path& root, Layout layout,
                                          const std::string& model_hash)
{
    if (std::filesystem::exists(root / kIndexName)) {
        FeatureStore s = open(root);
        if (s.layout_ != layout)
            throw std::runtime_error("feature store " + root.string() + " holds layout "
                                     + std::string(layout_name(s.layout_)) + ", requested "
                                     + std::string(layout_name(layout)));
        if (!model_hash.empty() && !s.model_hash_.empty() && s.model_hash_ != model_hash)
            throw std::runtime_error("feature store " + root.string() + " was built with model "
                                     + s.model_hash_ + ", requested " + model_hash);
        return s;
    }
    std::filesystem::create_directories(root);
    FeatureStore s(root, layout, model_hash);
    s.write_index();
    return s;
}

void FeatureStore::store(std::span<const ReshapedFeature> items)
{
    for (const auto& item : items) {
        if (item.layout != layout_)
            throw std::invalid_argument("feature '" + item.source_id + "' has layout "
                                        + std::string(layout_name(item.layout)) + ", store holds "
                                        + std::string(layout_name(layout_)));
        if (item.data.shape() != layout_shape(layout_))
            throw std::invalid_argument("feature '" + item.source_id + "' has shape "
                                        + shape_str(item.data.shape()));
        auto it = index_.find(item.source_id);
        const std::string file = it != index_.end() ? it->second.file : file_name(index_.size());
        const auto bytes = npy::encode(item.data.values(), item.data.shape());
        npy::write_bytes(root_ / file, bytes);
        index_[item.source_id] = Entry{file, sha256_hex(bytes), item.layout};
    }
    write_index();
}

std::vector<ReshapedFeature> FeatureStore::load(std::span<const std::string> source_ids, Layout requested) const
{
    if (requested != layout_)
        throw std::runtime_error("layout mismatch: store holds " + std::string(layout_name(layout_))
                                 + ", requested " + std::string(layout_name(requested)));
    std::vector<ReshapedFeature> out;
    out.reserve(source_ids.size());
    for (const auto& id : source_ids) {
        auto it = index_.find(id);
        if (it == index_.end())
            throw std::runtime_error("feature store has no entry for '" + id + "'");
        const Entry& e = it->second;
        if (e.layout != requested)
            throw std::runtime_error("layout mismatch for '" + id + "': stored " + std::string(layout_name(e.layout))
                                     + ", requested " + std::string(layout_name(requested)));
        const auto bytes = npy::read_bytes(root_ / e.file);
        if (sha256_hex(bytes) != e.sha256)
            throw std::runtime_error("checksum mismatch for '" + id + "' (" + (root_ / e.file).string() + ")");
        Tensor<float> t = npy::decode(bytes);
        if (t.shape() != layout_shape(requested))
            throw std::runtime_error("stored tensor for '" + id + "' has shape " + shape_str(t.shape()));
        out.push_back({std::move(t), e.layout, id});
    }
    return out;
}

std::uintmax_t FeatureStore::payload_bytes() const
{
    std::uintmax_t total = 0;
    for (const auto& [id, e] : index_)
        total += std::filesystem::file_size(root_ / e.file);
    return total;
}

void FeatureStore::write_index() const
{
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [id, e] : index_)
        entries[id] = {{"file", e.file}, {"sha256", e.sha256}, {"layout", layout_name(e.layout)}};
    nlohmann::json j{{"metadata", {{"model_hash", model_hash_}, {"layout", layout_name(layout_)}}},
                     {"entries", std::move(entries)}};
    const auto tmp = root_ / (std::string(kIndexName) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out << j.dump(1) << '\n';
    }
    std::filesystem::rename(tmp, root_ / kIndexName);
}

} // namespace plankton::features
