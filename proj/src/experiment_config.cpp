#include "plankton/experiment/config.hpp"

#include <fstream>
#include <stdexcept>

#include "plankton/hashing.hpp"

namespace plankton::experiment {

namespace fs = std::filesystem;

std::string_view heads_name(SupervisedHeads h)
{
    switch (h) {
    case SupervisedHeads::none: return "none";
    case SupervisedHeads::ridge: return "ridge";
    case SupervisedHeads::fc: return "fc";
    case SupervisedHeads::both: return "both";
    }
    return "?";
}

SupervisedHeads parse_heads(std::string_view s)
{
    for (auto h : {SupervisedHeads::none, SupervisedHeads::ridge, SupervisedHeads::fc, SupervisedHeads::both})
        if (heads_name(h) == s)
            return h;
    throw std::invalid_argument("unknown supervised setting '" + std::string(s) + "' (none, ridge, fc, both)");
}

void ExperimentConfig::validate() const
{
    if (manifest.empty())
        throw std::invalid_argument("config: manifest path is required");
    if (output_dir.empty())
        throw std::invalid_argument("config: output_dir is required");
    if (embedder.layout == features::Layout::raw)
        throw std::invalid_argument("config: layout must be image, r1 or r2");
    embedder.validate();
    if (clustering.n_clusters == 1)
        throw std::invalid_argument("config: n_clusters must be 0 (number of classes) or at least 2");
    if (repeats < 1)
        throw std::invalid_argument("config: repeats must be at least 1");
    if (folds < 2)
        throw std::invalid_argument("config: folds must be at least 2");
    if (seeds.size() != static_cast<std::size_t>(repeats))
        throw std::invalid_argument("config: " + std::to_string(seeds.size()) + " seeds for "
                                    + std::to_string(repeats) + " repeats");
    if (!(test_ratio > 0.0 && test_ratio < 1.0))
        throw std::invalid_argument("config: test_ratio must be in (0, 1)");
    if (ridge.lambda_lo > ridge.lambda_hi || ridge.gamma_lo > ridge.gamma_hi)
        throw std::invalid_argument("config: empty ridge grid");
}

namespace {

std::string absolute_path(const fs::path& p) { return p.empty() ? std::string() : fs::absolute(p).lexically_normal().generic_string(); }

} // namespace

nlohmann::json ExperimentConfig::snapshot() const
{
    nlohmann::json emb = embed::to_json(embedder);
    return {{"name", name},
            {"manifest", absolute_path(manifest)},
            {"onnx_model", absolute_path(onnx_model)},
            {"feature_store", absolute_path(feature_store)},
            {"output_dir", absolute_path(output_dir)},
            {"layout", emb.at("layout")},
            {"variant", emb.at("variant")},
            {"latent_dim", embedder.latent_dim},
            {"embedder",
             {{"epochs", embedder.epochs},
              {"batch_size", embedder.batch_size},
              {"lr", embedder.lr},
              {"optimizer", emb.at("optimizer")},
              {"decay_gamma", embedder.decay_gamma},
              {"channels", embedder.channels}}},
            {"clustering",
             {{"n_clusters", clustering.n_clusters},
              {"m", clustering.m},
              {"tol", clustering.tol},
              {"max_iter", clustering.max_iter},
              {"overlap_mode", metrics::overlap_mode_name(overlap.mode)},
              {"overlap_direction", metrics::overlap_direction_name(overlap.direction)}}},
            {"repeats", repeats},
            {"folds", folds},
            {"seeds", seeds},
            {"test_ratio", test_ratio},
            {"split_seed", split_seed},
            {"supervised", heads_name(supervised)},
            {"ridge",
             {{"lambda_exp", {ridge.lambda_lo, ridge.lambda_hi}},
              {"gamma_exp", {ridge.gamma_lo, ridge.gamma_hi}},
              {"center_targets", ridge.center_targets}}},
            {"fc", {{"hidden", fc.hidden}, {"epochs", fc.epochs}, {"batch_size", fc.batch_size}, {"lr", fc.lr}}},
            {"extract_batch", extract_batch}};
}

std::string config_hash(const nlohmann::json& snapshot) { return sha256_hex(snapshot.dump()); }

std::string ExperimentConfig::hash() const { return config_hash(snapshot()); }

namespace {

fs::path resolve(const fs::path& base, const std::string& p)
{
    if (p.empty())
        return {};
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base)
{
    ExperimentConfig c;
    c.name = j.value("name", "");
    c.manifest = resolve(base, j.at("manifest").get<std::string>());
    c.onnx_model = resolve(base, j.value("onnx_model", ""));
    c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
    c.feature_store = resolve(base, j.value("feature_store", ""));
    if (c.feature_store.empty())
        c.feature_store = c.output_dir / "features";

    const auto variant = embed::parse_variant(j.value("variant", "VAE"));
    const auto layout = features::parse_layout(j.value("layout", "r2"));
    c.embedder = embed::EmbedderConfig::standard(variant, layout, j.value("latent_dim", std::size_t{500}));
    if (j.contains("embedder")) {
        const auto& e = j.at("embedder");
        c.embedder.epochs = e.value("epochs", c.embedder.epochs);
        c.embedder.batch_size = e.value("batch_size", c.embedder.batch_size);
        c.embedder.lr = e.value("lr", c.embedder.lr);
        if (e.contains("optimizer"))
            c.embedder.optimizer = nn::parse_optimizer(e.at("optimizer").get<std::string>());
        c.embedder.decay_gamma = e.value("decay_gamma", c.embedder.decay_gamma);
        c.embedder.channels = e.value("channels", c.embedder.channels);
    }
    if (j.contains("clustering")) {
        const auto& k = j.at("clustering");
        c.clustering.n_clusters = k.value("n_clusters", std::size_t{0});
        c.clustering.m = k.value("m", c.clustering.m);
        c.clustering.tol = k.value("tol", c.clustering.tol);
        c.clustering.max_iter = k.value("max_iter", c.clustering.max_iter);
        c.overlap.mode = metrics::parse_overlap_mode(k.value("overlap_mode", "collisions"));
        c.overlap.direction = metrics::parse_overlap_direction(k.value("overlap_direction", "class_majority"));
    } else {
        c.clustering.n_clusters = 0;
    }
    c.repeats = j.value("repeats", c.repeats);
    c.folds = j.value("folds", c.folds);
    if (j.contains("seeds")) {
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
        c.seeds.clear();
        for (int r = 0; r < c.repeats; ++r)
            c.seeds.push_back(static_cast<std::uint64_t>(r));
    }
    c.test_ratio = j.value("test_ratio", c.test_ratio);
    c.split_seed = j.value("split_seed", c.split_seed);
    c.supervised = parse_heads(j.value("supervised", "none"));
    if (j.contains("ridge")) {
        const auto& r = j.at("ridge");
        if (r.contains("lambda_exp")) {
            c.ridge.lambda_lo = r.at("lambda_exp").at(0).get<int>();
            c.ridge.lambda_hi = r.at("lambda_exp").at(1).get<int>();
        }
        if (r.contains("gamma_exp")) {
            c.ridge.gamma_lo = r.at("gamma_exp").at(0).get<int>();
            c.ridge.gamma_hi = r.at("gamma_exp").at(1).get<int>();
        }
        c.ridge.center_targets = r.value("center_targets", false);
    }
    if (j.contains("fc")) {
        const auto& f = j.at("fc");
        c.fc.hidden = f.value("hidden", c.fc.hidden);
        c.fc.epochs = f.value("epochs", c.fc.epochs);
        c.fc.batch_size = f.value("batch_size", c.fc.batch_size);
        c.fc.lr = f.value("lr", c.fc.lr);
    }
    c.extract_batch = j.value("extract_batch", c.extract_batch);
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

void save_config(const ExperimentConfig& config, const fs::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write config " + path.string());
    out << config.snapshot().dump(2) << '\n';
}

} // namespace plankton::experiment
