#include "plankton/experiment/smoke.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "plankton/data/image.hpp"
#include "plankton/features/feature_store.hpp"

namespace plankton::experiment {

namespace fs = std::filesystem;

namespace {

nlohmann::json smoke_json()
{
    return {{"name", "smoke_vae_r1_z10"},
            {"manifest", "smoke.csv"},
            {"feature_store", "features"},
            {"output_dir", "run"},
            {"layout", "r1"},
            {"variant", "VAE"},
            {"latent_dim", 10},
            {"embedder", {{"epochs", 50}, {"batch_size", 16}}},
            {"repeats", 5},
            {"folds", 5},
            {"seeds", {11, 12, 13, 14, 15}},
            {"test_ratio", 0.25},
            {"split_seed", 3},
            {"supervised", "none"}};
}

} // namespace

ExperimentConfig smoke_config(const fs::path& root) { return config_from_json(smoke_json(), root); }

fs::path make_smoke_dataset(const fs::path& root, const SmokeOptions& options)
{
    if (options.classes < 2 || options.per_class < 5)
        throw std::invalid_argument("smoke dataset needs at least 2 classes of 5 samples");
    fs::create_directories(root / "images");
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::normal_distribution<float> normal(0.0f, 1.0f);

    std::vector<std::vector<float>> means(options.classes, std::vector<float>(features::kFeatureElements));
    for (auto& m : means)
        for (auto& v : m)
            v = unit(rng);

    std::ofstream manifest(root / "smoke.csv");
    manifest << "path,label,split\n";
    std::vector<features::ReshapedFeature> feats;
    for (std::size_t c = 0; c < options.classes; ++c) {
        const std::string label = "class_" + std::string(1, static_cast<char>('a' + c));
        for (std::size_t i = 0; i < options.per_class; ++i) {
            const std::string rel = "images/" + label + "_" + std::to_string(i) + ".png";
            data::Image img{16, 16, 3, std::vector<float>(16 * 16 * 3)};
            for (std::size_t p = 0; p < 16 * 16; ++p)
                for (std::size_t ch = 0; ch < 3; ++ch)
                    img.pixels[p * 3 + ch] = static_cast<float>(ch == c % 3 ? 200 : 40) + 20.0f * unit(rng);
            data::write_image(root / rel, img);
            manifest << rel << ',' << label << ",\n";

            Tensor<float> t(features::layout_shape(features::Layout::raw));
            for (std::size_t k = 0; k < t.size(); ++k)
                t[k] = std::max(0.0f, means[c][k] + static_cast<float>(options.noise) * normal(rng));
            feats.push_back({std::move(t), features::Layout::raw, rel});
        }
    }
    manifest.close();

    fs::remove_all(root / "features");
    auto store = features::FeatureStore::open_or_create(root / "features", features::Layout::raw,
                                                        "synthetic-" + std::to_string(options.seed));
    store.store(feats);

    const fs::path config_path = root / "smoke.json";
    std::ofstream cfg(config_path);
    cfg << smoke_json().dump(2) << '\n';
    return config_path;
}

} // namespace plankton::experiment
