#include "plankton/experiment/latents.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "plankton/data/manifest.hpp"
#include "plankton/experiment/experiment.hpp"
#include "plankton/npy.hpp"

namespace plankton::experiment {

namespace fs = std::filesystem;

namespace {

fs::path sidecar(const fs::path& npy_path) { return fs::path(npy_path).replace_extension(".json"); }

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos)
        return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

} // namespace

void save_latents(const LatentTable& t, const fs::path& npy_path)
{
    if (t.ids.size() != t.rows.size() || t.labels.size() != t.rows.size())
        throw std::invalid_argument("save_latents: ids, labels and rows differ in length");
    const std::size_t z = t.dim();
    std::vector<float> flat;
    flat.reserve(t.rows.size() * z);
    for (const auto& r : t.rows) {
        if (r.size() != z)
            throw std::invalid_argument("save_latents: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    npy::write(npy_path, flat, {t.rows.size(), z});
    std::ofstream out(sidecar(npy_path));
    if (!out)
        throw std::runtime_error("cannot write " + sidecar(npy_path).string());
    out << nlohmann::json{{"ids", t.ids}, {"labels", t.labels}, {"splits", t.splits}}.dump() << '\n';
}

LatentTable load_latents(const fs::path& npy_path)
{
    if (!fs::exists(npy_path))
        throw std::runtime_error("latents not found: " + npy_path.string());
    const Tensor<float> m = npy::read(npy_path);
    if (m.rank() != 2)
        throw std::runtime_error(npy_path.string() + ": expected an (N, Z) matrix, found " + shape_str(m.shape()));
    std::ifstream in(sidecar(npy_path));
    if (!in)
        throw std::runtime_error("latent sidecar not found: " + sidecar(npy_path).string());
    nlohmann::json j;
    in >> j;
    LatentTable t;
    t.ids = j.at("ids").get<std::vector<std::string>>();
    t.labels = j.at("labels").get<std::vector<std::string>>();
    t.splits = j.value("splits", std::vector<std::string>{});
    if (t.ids.size() != m.dim(0) || t.labels.size() != m.dim(0))
        throw std::runtime_error(npy_path.string() + ": sidecar lists " + std::to_string(t.ids.size())
                                 + " ids for " + std::to_string(m.dim(0)) + " rows");
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        auto row = m.sample(i);
        t.rows.emplace_back(row.begin(), row.end());
    }
    return t;
}

void write_latents_csv(const LatentTable& t, const fs::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "source_id,class_label";
    for (std::size_t k = 1; k <= t.dim(); ++k)
        out << ",z_" << k;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        out << csv_field(t.ids[i]) << ',' << csv_field(t.labels[i]);
        for (const float v : t.rows[i]) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v); // shortest round-trip form
            out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
}

LatentTable read_latents_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path.string() + ": empty file");
    const auto header = data::split_csv_line(line);
    if (header.size() < 3 || header[0] != "source_id" || header[1] != "class_label")
        throw std::runtime_error(path.string() + ": expected header source_id,class_label,z_1,...");
    const std::size_t z = header.size() - 2;
    LatentTable t;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto f = data::split_csv_line(line);
        if (f.size() != z + 2)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected "
                                     + std::to_string(z + 2) + " fields, found " + std::to_string(f.size()));
        t.ids.push_back(f[0]);
        t.labels.push_back(f[1]);
        std::vector<float> row(z);
        for (std::size_t k = 0; k < z; ++k) {
            const auto& s = f[k + 2];
            const auto res = std::from_chars(s.data(), s.data() + s.size(), row[k]);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

void export_latents(const fs::path& record_path, int repeat, const fs::path& csv_path)
{
    const ExperimentRecord r = load_record(record_path);
    if (repeat < 0 || static_cast<std::size_t>(repeat) >= r.repeats.size())
        throw std::runtime_error(record_path.string() + ": no repeat " + std::to_string(repeat) + " (record has "
                                 + std::to_string(r.repeats.size()) + ")");
    const auto& a = r.repeats[static_cast<std::size_t>(repeat)].artifacts;
    const auto it = a.find("latents");
    if (it == a.end())
        throw std::runtime_error(record_path.string() + ": repeat " + std::to_string(repeat) + " has no latents");
    write_latents_csv(load_latents(it->second), csv_path);
}

} // namespace plankton::experiment
