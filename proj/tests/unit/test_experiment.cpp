#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "plankton/experiment/experiment.hpp"
#include "plankton/features/feature_store.hpp"
#include "plankton/experiment/latents.hpp"
#include "plankton/experiment/report.hpp"
#include "plankton/experiment/smoke.hpp"
#include "plankton/hashing.hpp"

using namespace plankton;
using namespace plankton::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("plankton_experiment_" + name);
    fs::remove_all(dir);
    return dir;
}

/// Smoke dataset with a short schedule so the suite stays quick.
ExperimentConfig quick_config(const fs::path& root, SupervisedHeads heads = SupervisedHeads::none)
{
    auto cfg = load_config(make_smoke_dataset(root));
    cfg.embedder.epochs = 4;
    cfg.repeats = 2;
    cfg.seeds = {21, 22};
    cfg.supervised = heads;
    cfg.fc.epochs = 10;
    cfg.ridge.lambda_lo = -2;
    cfg.ridge.lambda_hi = 0;
    cfg.ridge.gamma_lo = -2;
    cfg.ridge.gamma_hi = -1;
    return cfg;
}

} // namespace

TEST(Config, JsonRoundTripKeepsHash)
{
    const auto root = scratch("config");
    const auto cfg = quick_config(root);
    save_config(cfg, root / "copy.json");
    const auto back = load_config(root / "copy.json");
    EXPECT_EQ(back.hash(), cfg.hash());
    EXPECT_TRUE(back.manifest.is_absolute());
    EXPECT_EQ(back.embedder.latent_dim, 10u);
    EXPECT_EQ(back.embedder.variant, embed::Variant::vae);
}

TEST(Config, RelativePathsResolveAgainstFile)
{
    const auto root = scratch("relative");
    fs::create_directories(root / "cfg");
    std::ofstream(root / "cfg" / "e.json") << R"({"name": "x", "manifest": "../data/m.csv", "output_dir": "out",
        "layout": "r2", "variant": "AE", "latent_dim": 50})";
    const auto cfg = load_config(root / "cfg" / "e.json");
    EXPECT_EQ(cfg.manifest.lexically_normal(), (root / "data" / "m.csv").lexically_normal());
    EXPECT_EQ(cfg.feature_store.lexically_normal(), (root / "cfg" / "out" / "features").lexically_normal());
    EXPECT_EQ(cfg.embedder.optimizer, nn::OptimizerKind::sgd_expdecay);
}

TEST(Config, RejectsInvalidSettings)
{
    const auto root = scratch("invalid");
    auto cfg = quick_config(root);
    cfg.seeds = {1};
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = quick_config(root);
    cfg.test_ratio = 1.5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_THROW(config_from_json(nlohmann::json{{"name", "x"}, {"variant", "GAN"}}), std::exception);
}

TEST(Experiment, RunPersistsRecordAndArtifacts)
{
    const auto root = scratch("run");
    const auto cfg = quick_config(root, SupervisedHeads::both);
    const auto rec = run(cfg);
    ASSERT_EQ(rec.repeats.size(), 2u);
    EXPECT_TRUE(rec.error.empty());
    EXPECT_EQ(rec.dataset, "smoke");
    EXPECT_EQ(rec.algorithm, "FE_r1-VAE");
    EXPECT_EQ(rec.n_classes, 3u);
    for (const char* key : {"purity", "overlaps", "validation_purity", "ridge_accuracy", "fc_accuracy"})
        EXPECT_TRUE(rec.summary.contains(key)) << key;
    for (const auto& rep : rec.repeats) {
        EXPECT_EQ(rep.validation_fold, static_cast<std::size_t>(rep.index));
        for (const auto& [kind, path] : rep.artifacts)
            EXPECT_TRUE(fs::exists(path)) << kind;
        EXPECT_TRUE(rep.ridge_search.contains("lambda"));
    }

    const auto loaded = load_record(cfg.output_dir / "record.json");
    EXPECT_TRUE(loaded.hash_matches());
    EXPECT_EQ(loaded.config_hash, cfg.hash());
    EXPECT_EQ(loaded.repeats.size(), 2u);
    EXPECT_EQ(loaded.summary.at("purity").runs, rec.summary.at("purity").runs);
    EXPECT_EQ(format_cell(loaded), format_cell(rec));
}

TEST(Experiment, SameSeedsGiveIdenticalResults)
{
    const auto a_root = scratch("det_a"), b_root = scratch("det_b");
    const auto a = run(quick_config(a_root));
    const auto b = run(quick_config(b_root));
    EXPECT_EQ(a.summary.at("purity").runs, b.summary.at("purity").runs);
    EXPECT_EQ(a.summary.at("overlaps").runs, b.summary.at("overlaps").runs);
    EXPECT_EQ(a.config_hash == b.config_hash, false); // output paths differ
    for (std::size_t r = 0; r < 2; ++r)
        EXPECT_EQ(sha256_file(a.repeats[r].artifacts.at("latents")), sha256_file(b.repeats[r].artifacts.at("latents")));
}

TEST(Experiment, TamperedRecordFailsHashCheck)
{
    const auto root = scratch("tamper");
    const auto cfg = quick_config(root);
    run(cfg);
    auto rec = load_record(cfg.output_dir / "record.json");
    ASSERT_TRUE(rec.hash_matches());
    rec.config["latent_dim"] = 999;
    EXPECT_FALSE(rec.hash_matches());
    const auto report = render_report({rec});
    EXPECT_NE(report.text.find("config hash does not match"), std::string::npos);
}

TEST(Experiment, MissingFeaturesLeavePartialRecord)
{
    const auto root = scratch("partial");
    const auto cfg = quick_config(root);
    const auto store = features::FeatureStore::open(cfg.feature_store);
    fs::remove(cfg.feature_store / store.index().begin()->second.file);
    try {
        run(cfg);
        FAIL() << "run succeeded without features";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "extract");
        EXPECT_NE(std::string(e.what()).find("[extract"), std::string::npos);
    }
    const auto rec = load_record(cfg.output_dir / "record.json");
    EXPECT_FALSE(rec.error.empty());
    EXPECT_TRUE(rec.repeats.empty());
    EXPECT_NE(render_report({rec}).text.find("partial"), std::string::npos);
}

TEST(Latents, ExportMatchesStoredMatrix)
{
    const auto root = scratch("export");
    const auto cfg = quick_config(root);
    const auto rec = run(cfg);
    const fs::path csv = root / "latents_r1.csv";
    export_latents(cfg.output_dir / "record.json", 1, csv);
    const auto from_csv = read_latents_csv(csv);
    const auto from_npy = load_latents(rec.repeats[1].artifacts.at("latents"));
    ASSERT_EQ(from_csv.rows.size(), 60u);
    EXPECT_EQ(from_csv.dim(), 10u);
    EXPECT_EQ(from_csv.ids, from_npy.ids);
    EXPECT_EQ(from_csv.labels, from_npy.labels);
    EXPECT_EQ(from_csv.rows, from_npy.rows);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("source_id,class_label,z_1,", 0), 0u);
    EXPECT_THROW(export_latents(cfg.output_dir / "record.json", 7, csv), std::exception);
}

TEST(Latents, NpySidecarRoundTrip)
{
    const auto root = scratch("latents_rt");
    fs::create_directories(root);
    LatentTable t;
    t.ids = {"a", "b"};
    t.labels = {"x", "y"};
    t.splits = {"train", "test"};
    t.rows = {{0.1f, 1e-8f, -3.0f}, {2.0f, 0.0f, 1.0f / 3.0f}};
    save_latents(t, root / "z.npy");
    const auto back = load_latents(root / "z.npy");
    EXPECT_EQ(back.ids, t.ids);
    EXPECT_EQ(back.splits, t.splits);
    EXPECT_EQ(back.rows, t.rows);
    write_latents_csv(t, root / "z.csv");
    EXPECT_EQ(read_latents_csv(root / "z.csv").rows, t.rows);
}

TEST(Report, TablesPerDatasetWithZColumns)
{
    auto make = [](std::string dataset, std::string alg, std::size_t z, double purity, bool ridge) {
        ExperimentRecord r;
        r.config = nlohmann::json{{"name", alg}};
        r.config_hash = config_hash(r.config);
        r.dataset = std::move(dataset);
        r.algorithm = std::move(alg);
        r.latent_dim = z;
        r.summary["purity"] = metrics::aggregate(std::vector<double>{purity, purity});
        r.summary["overlaps"] = metrics::aggregate(std::vector<double>{0, 0});
        if (ridge)
            r.summary["ridge_accuracy"] = metrics::aggregate(std::vector<double>{0.9, 1.0});
        return r;
    };
    const auto rep = render_report({make("lensless", "FE_r2-VAE", 500, 0.98, true), make("lensless", "FE_r2-VAE", 10, 0.9, false),
                                    make("lensless", "IMG-AE", 10, 0.5, false)});
    EXPECT_NE(rep.text.find("Clustering purity on lensless for latent space size Z"), std::string::npos);
    EXPECT_NE(rep.text.find("0.98 ± 0.00 (0 ± 0)"), std::string::npos);
    EXPECT_NE(rep.text.find("Test classification accuracy"), std::string::npos);
    EXPECT_NE(rep.text.find("best 1.000"), std::string::npos);
    EXPECT_TRUE(rep.warnings.empty());
    EXPECT_EQ(std::count(rep.csv.begin(), rep.csv.end(), '\n'), 4);

    const auto mixed = render_report({make("lensless", "FE_r2-VAE", 10, 0.9, false), make("whoi22", "FE_r2-VAE", 10, 0.6, false),
                                      make("whoi22", "FE_r2-VAE", 10, 0.6, false)});
    EXPECT_NE(mixed.text.find("no record carries supervised metrics"), std::string::npos);
    EXPECT_EQ(mixed.warnings.size(), 2u); // several datasets, duplicate cell
    EXPECT_THROW(render_report({}), std::invalid_argument);
}

TEST(Algorithm, Names)
{
    EXPECT_EQ(algorithm_name(features::Layout::r2, embed::Variant::vae), "FE_r2-VAE");
    EXPECT_EQ(algorithm_name(features::Layout::r1, embed::Variant::ae), "FE_r1-AE");
    EXPECT_EQ(algorithm_name(features::Layout::image, embed::Variant::ae), "IMG-AE");
}
