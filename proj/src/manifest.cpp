#include "plankton/data/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace plankton::data {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    if (quoted)
        throw std::runtime_error("unterminated quote");
    fields.push_back(std::move(field));
    return fields;
}

namespace {

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

} // namespace

std::vector<int> Manifest::class_ids() const
{
    std::vector<int> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries)
        ids.push_back(class_id(e.label));
    return ids;
}

int Manifest::class_id(const std::string& label) const
{
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label)
        throw std::out_of_range("unknown class label '" + label + "'");
    return static_cast<int>(it - classes.begin());
}

bool Manifest::fully_hinted() const
{
    return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) {
        return e.split != SplitHint::none;
    });
}

Manifest load_manifest(const std::filesystem::path& path, ManifestOptions options)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("manifest not found: " + path.string());

    const auto base = path.parent_path();
    Manifest manifest;
    manifest.dataset_name = path.stem().string();
    if (manifest.dataset_name == "manifest" && path.has_parent_path())
        manifest.dataset_name = path.parent_path().filename().string();

    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0)
            line.erase(0, 3);
        if (trim(line).empty())
            continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);

        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        if (!header_seen) {
            header_seen = true;
            if (fields.size() < 2 || trim(fields[0]) != "path" || trim(fields[1]) != "label"
                || (fields.size() > 2 && trim(fields[2]) != "split"))
                throw std::runtime_error(where + ": expected header 'path,label,split'");
            continue;
        }
        if (fields.size() < 2 || fields.size() > 3)
            throw std::runtime_error(where + ": expected 2 or 3 fields, got "
                                     + std::to_string(fields.size()));

        ManifestEntry entry;
        entry.source_id = trim(fields[0]);
        entry.label = trim(fields[1]);
        if (entry.source_id.empty() || entry.label.empty())
            throw std::runtime_error(where + ": empty path or label");
        const std::string hint = fields.size() == 3 ? trim(fields[2]) : std::string{};
        if (hint == "train")
            entry.split = SplitHint::train;
        else if (hint == "test")
            entry.split = SplitHint::test;
        else if (!hint.empty())
            throw std::runtime_error(where + ": split must be 'train', 'test' or empty, got '" + hint
                                     + "'");
        if (!seen_ids.insert(entry.source_id).second)
            throw std::runtime_error(where + ": duplicate path '" + entry.source_id + "'");

        std::filesystem::path p(entry.source_id);
        entry.image_path = p.is_absolute() ? p : base / p;
        if (options.check_images_exist && !std::filesystem::exists(entry.image_path))
            throw std::runtime_error(where + ": image not found: " + entry.image_path.string());
        manifest.entries.push_back(std::move(entry));
    }
    if (manifest.entries.empty())
        throw std::runtime_error(path.string() + ": no entries");

    std::map<std::string, std::size_t> counts;
    for (const auto& e : manifest.entries)
        ++counts[e.label];
    for (const auto& [label, n] : counts) {
        if (n < 2)
            throw std::runtime_error(path.string() + ": class '" + label + "' has " + std::to_string(n)
                                     + " sample(s); at least 2 required");
        manifest.classes.push_back(label);
    }
    return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "path,label,split\n";
    for (const auto& e : manifest.entries) {
        const char* hint = e.split == SplitHint::train ? "train"
                           : e.split == SplitHint::test ? "test"
                                                        : "";
        out << quote(e.source_id) << ',' << quote(e.label) << ',' << hint << '\n';
    }
}

} // namespace plankton::data
