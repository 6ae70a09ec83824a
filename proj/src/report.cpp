#include "plankton/experiment/report.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace plankton::experiment {

namespace {

// display width: "±" is two bytes but one column
std::size_t columns(const std::string& s)
{
    std::size_t cols = 0;
    for (const unsigned char c : s)
        cols += (c & 0xC0) != 0x80;
    return cols;
}

std::string pad(const std::string& s, std::size_t width)
{
    const std::size_t cols = columns(s);
    return s + std::string(width > cols ? width - cols : 0, ' ');
}

std::string fixed(double v, int digits)
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

void render_table(std::ostringstream& text, const std::string& title, const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = columns(header[c]);
        for (const auto& r : rows)
            width[c] = std::max(width[c], columns(r[c]));
    }
    text << title << '\n';
    for (std::size_t c = 0; c < header.size(); ++c)
        text << (c ? " | " : "") << pad(header[c], width[c]);
    text << '\n';
    for (std::size_t c = 0; c < header.size(); ++c)
        text << (c ? "-+-" : "") << std::string(width[c], '-');
    text << '\n';
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < header.size(); ++c)
            text << (c ? " | " : "") << pad(r[c], width[c]);
        text << '\n';
    }
    text << '\n';
}

} // namespace

Report render_report(const std::vector<ExperimentRecord>& records)
{
    if (records.empty())
        throw std::invalid_argument("report: no records");
    Report rep;
    std::ostringstream text, csv;

    std::map<std::string, std::vector<const ExperimentRecord*>> by_dataset;
    for (const auto& r : records) {
        by_dataset[r.dataset].push_back(&r);
        if (!r.error.empty())
            rep.warnings.push_back(r.dataset + " " + r.algorithm + " Z=" + std::to_string(r.latent_dim)
                                   + " is partial: " + r.error);
        if (!r.hash_matches())
            rep.warnings.push_back(r.dataset + " " + r.algorithm + " Z=" + std::to_string(r.latent_dim)
                                   + ": config hash does not match its snapshot");
    }
    if (by_dataset.size() > 1) {
        std::string names;
        for (const auto& [name, _] : by_dataset)
            names += (names.empty() ? "" : ", ") + name;
        rep.warnings.push_back("records span several datasets (" + names + "); one table per dataset");
    }

    csv << "dataset,algorithm,latent_dim,purity_mean,purity_std,overlaps_mean,overlaps_std,repeats,"
           "ridge_mean,ridge_max,fc_mean,fc_max,wall_clock_seconds\n";
    for (const auto& [dataset, recs] : by_dataset) {
        std::set<std::size_t> zs;
        std::vector<std::string> algorithms;
        std::map<std::pair<std::string, std::size_t>, const ExperimentRecord*> cell;
        for (const auto* r : recs) {
            zs.insert(r->latent_dim);
            if (std::find(algorithms.begin(), algorithms.end(), r->algorithm) == algorithms.end())
                algorithms.push_back(r->algorithm);
            const auto key = std::make_pair(r->algorithm, r->latent_dim);
            if (cell.contains(key))
                rep.warnings.push_back(dataset + " " + r->algorithm + " Z=" + std::to_string(r->latent_dim)
                                       + " appears more than once; the last record wins");
            cell[key] = r;
        }
        std::vector<std::string> header{"Algorithm/Z"};
        for (const auto z : zs)
            header.push_back(std::to_string(z));
        std::vector<std::vector<std::string>> rows;
        for (const auto& a : algorithms) {
            std::vector<std::string> row{a};
            for (const auto z : zs) {
                const auto it = cell.find({a, z});
                row.push_back(it == cell.end() ? "-" : format_cell(*it->second));
            }
            rows.push_back(std::move(row));
        }
        render_table(text, "Clustering purity on " + dataset + " for latent space size Z", header, rows);

        for (const auto* r : recs) {
            auto get = [&](const char* name, bool max) -> std::string {
                const auto it = r->summary.find(name);
                if (it == r->summary.end())
                    return "";
                return fixed(max ? it->second.max() : it->second.mean, 6);
            };
            csv << dataset << ',' << r->algorithm << ',' << r->latent_dim << ',' << get("purity", false) << ','
                << (r->summary.contains("purity") ? fixed(r->summary.at("purity").std, 6) : "") << ','
                << get("overlaps", false) << ','
                << (r->summary.contains("overlaps") ? fixed(r->summary.at("overlaps").std, 6) : "") << ','
                << r->repeats.size() << ',' << get("ridge_accuracy", false) << ',' << get("ridge_accuracy", true)
                << ',' << get("fc_accuracy", false) << ',' << get("fc_accuracy", true) << ','
                << fixed(r->wall_clock_seconds, 3) << '\n';
        }
    }

    std::vector<std::vector<std::string>> sup;
    for (const auto& r : records) {
        const bool ridge = r.summary.contains("ridge_accuracy");
        const bool fc = r.summary.contains("fc_accuracy");
        if (!ridge && !fc)
            continue;
        auto show = [&](const char* name) -> std::string {
            const auto it = r.summary.find(name);
            if (it == r.summary.end())
                return "-";
            return fixed(it->second.mean, 3) + " ± " + fixed(it->second.std, 3) + " (best " + fixed(it->second.max(), 3) + ")";
        };
        sup.push_back({r.dataset, r.algorithm, std::to_string(r.latent_dim), show("ridge_accuracy"), show("fc_accuracy")});
    }
    if (sup.empty())
        text << "Supervised accuracy: no record carries supervised metrics; table omitted.\n";
    else
        render_table(text, "Test classification accuracy", {"Dataset", "Embedding", "Z", "Ridge", "FC"}, sup);

    for (const auto& w : rep.warnings)
        text << "warning: " << w << '\n';
    rep.text = text.str();
    rep.csv = csv.str();
    return rep;
}

} // namespace plankton::experiment
