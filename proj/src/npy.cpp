#include "plankton/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <stdexcept>

namespace plankton::npy {
namespace {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kAlign = 64;

std::string header_dict(const Shape& shape)
{
    std::string dims;
    for (std::size_t i = 0; i < shape.size(); ++i)
        dims += (i ? ", " : "") + std::to_string(shape[i]);
    if (shape.size() == 1)
        dims += ",";
    return "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
}

Shape parse_shape(const std::string& text)
{
    Shape shape;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == ','))
            ++pos;
        if (pos >= text.size())
            break;
        std::size_t used = 0;
        shape.push_back(std::stoull(text.substr(pos), &used));
        pos += used;
    }
    return shape;
}

} // namespace

std::vector<std::uint8_t> encode(std::span<const float> values, const Shape& shape)
{
    if (values.size() != element_count(shape))
        throw std::invalid_argument("npy: value count does not match shape " + shape_str(shape));

    std::string dict = header_dict(shape);
    // magic + version + u16 length + dict + padding + '\n' is a multiple of 64
    const std::size_t preamble = kMagicLen + 2 + 2;
    std::size_t total = preamble + dict.size() + 1;
    dict.append((kAlign - total % kAlign) % kAlign, ' ');
    dict.push_back('\n');

    std::vector<std::uint8_t> out;
    out.reserve(preamble + dict.size() + values.size_bytes());
    out.insert(out.end(), kMagic, kMagic + kMagicLen);
    out.push_back(1);
    out.push_back(0);
    const auto len = static_cast<std::uint16_t>(dict.size());
    out.push_back(static_cast<std::uint8_t>(len & 0xff));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.insert(out.end(), dict.begin(), dict.end());
    const auto* raw = reinterpret_cast<const std::uint8_t*>(values.data());
    out.insert(out.end(), raw, raw + values.size_bytes());
    return out;
}

Tensor<float> decode(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
        throw std::runtime_error("npy: bad magic");
    const int major = bytes[6];
    std::size_t header_len = 0;
    std::size_t offset = 0;
    if (major == 1) {
        header_len = bytes[8] | (bytes[9] << 8);
        offset = 10;
    } else if (major == 2 || major == 3) {
        if (bytes.size() < 12)
            throw std::runtime_error("npy: truncated header");
        header_len = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16)
                     | (static_cast<std::size_t>(bytes[11]) << 24);
        offset = 12;
    } else {
        throw std::runtime_error("npy: unsupported version " + std::to_string(major));
    }
    if (offset + header_len > bytes.size())
        throw std::runtime_error("npy: truncated header");
    const std::string header(reinterpret_cast<const char*>(bytes.data() + offset), header_len);

    std::smatch m;
    static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
    static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
    static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
    if (!std::regex_search(header, m, descr_re))
        throw std::runtime_error("npy: header lacks descr");
    const std::string descr = m[1];
    if (!std::regex_search(header, m, order_re) || m[1] == "True")
        throw std::runtime_error("npy: only C-order arrays are supported");
    if (!std::regex_search(header, m, shape_re))
        throw std::runtime_error("npy: header lacks shape");
    Shape shape = parse_shape(m[1]);

    const std::size_t count = element_count(shape);
    const std::uint8_t* payload = bytes.data() + offset + header_len;
    const std::size_t available = bytes.size() - offset - header_len;
    std::vector<float> data(count);
    if (descr == "<f4") {
        if (available < count * 4)
            throw std::runtime_error("npy: truncated payload");
        std::memcpy(data.data(), payload, count * 4);
    } else if (descr == "<f8") {
        if (available < count * 8)
            throw std::runtime_error("npy: truncated payload");
        for (std::size_t i = 0; i < count; ++i) {
            double v;
            std::memcpy(&v, payload + 8 * i, 8);
            data[i] = static_cast<float>(v);
        }
    } else {
        throw std::runtime_error("npy: unsupported dtype '" + descr + "'");
    }
    return Tensor<float>(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("write failed: " + path.string());
}

void write(const std::filesystem::path& path, std::span<const float> values, const Shape& shape)
{
    write_bytes(path, encode(values, shape));
}

Tensor<float> read(const std::filesystem::path& path)
{
    try {
        return decode(read_bytes(path));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

} // namespace plankton::npy
