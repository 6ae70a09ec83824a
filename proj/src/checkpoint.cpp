#include "plankton/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace plankton::nn {
namespace {

constexpr char kMagic[8] = {'P', 'K', 'C', 'K', 'P', 'T', '0', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

} // namespace

const NamedArray& Checkpoint::find(const std::string& name) const
{
    for (const auto& a : arrays)
        if (a.name == name)
            return a;
    throw std::runtime_error("checkpoint has no array '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    nlohmann::json table = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& a : ckpt.arrays) {
        const std::uint64_t nbytes = a.data.size() * sizeof(float);
        table.push_back({{"name", a.name}, {"shape", a.data.shape()}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    }
    const std::string header = nlohmann::json{{"meta", ckpt.meta}, {"arrays", table}}.dump();
    const std::uint64_t header_len = header.size();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& a : ckpt.arrays)
        out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    if (!out)
        throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("checkpoint not found: " + path.string());
    char magic[8];
    std::uint64_t header_len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error(path.string() + ": not a checkpoint file");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    std::vector<char> payload(std::istreambuf_iterator<char>(in), {});

    Checkpoint ckpt;
    const auto j = nlohmann::json::parse(header);
    ckpt.meta = j.at("meta");
    for (const auto& a : j.at("arrays")) {
        const auto shape = a.at("shape").get<Shape>();
        const auto offset = a.at("offset").get<std::uint64_t>();
        const auto nbytes = a.at("nbytes").get<std::uint64_t>();
        if (nbytes != element_count(shape) * sizeof(float) || offset + nbytes > payload.size())
            throw std::runtime_error(path.string() + ": array '" + a.at("name").get<std::string>() + "' is truncated");
        std::vector<float> values(element_count(shape));
        std::memcpy(values.data(), payload.data() + offset, nbytes);
        ckpt.arrays.push_back({a.at("name").get<std::string>(), Tensor<float>(shape, std::move(values))});
    }
    return ckpt;
}

} // namespace plankton::nn
