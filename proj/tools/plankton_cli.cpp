// plankton: command line front end for the unsupervised plankton pipeline.

#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "plankton/cluster/fuzzy_cmeans.hpp"
#include "plankton/embed/embedder.hpp"
#include "plankton/experiment/config.hpp"
#include "plankton/experiment/experiment.hpp"
#include "plankton/experiment/latents.hpp"
#include "plankton/experiment/report.hpp"
#include "plankton/experiment/smoke.hpp"
#include "plankton/metrics/metrics.hpp"
#include "plankton/nn/checkpoint.hpp"
#include "plankton/supervised/fc.hpp"
#include "plankton/supervised/ridge.hpp"

namespace fs = std::filesystem;
using namespace plankton;

namespace {

struct PipelineFlags
{
    std::string config;
    std::string manifest;
    std::string model;
    std::string store;
    std::string output_dir;
    std::string layout;
    std::string variant;
    std::size_t latent_dim = 0;
    int epochs = 0;
    std::size_t batch_size = 0;
    double lr = 0.0;
    std::uint64_t seed = 0;
    double test_ratio = 0.0;

    void attach(CLI::App* app)
    {
        app->add_option("--config", config, "experiment config (JSON)");
        app->add_option("--manifest", manifest, "dataset manifest CSV");
        app->add_option("--model", model, "ONNX backbone");
        app->add_option("--store", store, "feature store directory");
        app->add_option("--output-dir", output_dir, "output directory");
        app->add_option("--layout", layout, "image, r1 or r2");
        app->add_option("--variant", variant, "AE or VAE");
        app->add_option("-z,--latent-dim", latent_dim, "latent size Z");
        app->add_option("--epochs", epochs, "training epochs");
        app->add_option("--batch-size", batch_size, "training batch size");
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--seed", seed, "seed for single-run commands");
        app->add_option("--test-ratio", test_ratio, "held-out test fraction");
    }

    /// Config file (if any) with command line overrides applied.
    experiment::ExperimentConfig resolve() const
    {
        nlohmann::json j = nlohmann::json::object();
        fs::path base;
        if (!config.empty()) {
            std::ifstream in(config);
            if (!in)
                throw std::runtime_error("cannot open config " + config);
            in >> j;
            base = fs::path(config).parent_path();
        }
        auto set_path = [&](const char* key, const std::string& v) {
            if (!v.empty())
                j[key] = fs::absolute(v).string();
        };
        set_path("manifest", manifest);
        set_path("onnx_model", model);
        set_path("feature_store", store);
        set_path("output_dir", output_dir);
        if (!j.contains("output_dir"))
            j["output_dir"] = fs::absolute("plankton_out").string();
        if (!layout.empty())
            j["layout"] = layout;
        if (!variant.empty())
            j["variant"] = variant;
        if (latent_dim)
            j["latent_dim"] = latent_dim;
        if (epochs)
            j["embedder"]["epochs"] = epochs;
        if (batch_size)
            j["embedder"]["batch_size"] = batch_size;
        if (lr > 0.0)
            j["embedder"]["lr"] = lr;
        if (test_ratio > 0.0)
            j["test_ratio"] = test_ratio;
        return experiment::config_from_json(j, base);
    }
};

std::vector<int> label_ids(const std::vector<std::string>& labels, const std::vector<std::string>& classes)
{
    std::vector<int> out;
    for (const auto& l : labels)
        out.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), l) - classes.begin()));
    return out;
}

cluster::Matrix matrix_of(const experiment::LatentTable& t) { return cluster::to_matrix(t.rows); }

int cmd_extract(const PipelineFlags& f)
{
    const auto cfg = f.resolve();
    const auto manifest = data::load_manifest(cfg.manifest);
    const auto n = experiment::extract_to_store(manifest, cfg.onnx_model, cfg.feature_store, cfg.extract_batch, &std::cerr);
    std::cout << "extracted " << n << " new samples into " << cfg.feature_store.string() << '\n';
    return 0;
}

int cmd_train(const PipelineFlags& f, const std::string& out, const std::string& latents_csv)
{
    auto cfg = f.resolve();
    cfg.embedder.seed = f.seed;
    const auto manifest = data::load_manifest(cfg.manifest);
    const auto plan = data::make_splits(manifest, 1.0 - cfg.test_ratio, cfg.folds, cfg.split_seed);
    const auto set = experiment::load_samples(cfg, manifest, &std::cerr);
    std::vector<Tensor<float>> train;
    for (const auto i : plan.train_ids)
        train.push_back(set.samples[i]);
    embed::EmbedderModel<float> model(cfg.embedder);
    const auto history = embed::train(model, std::span<const Tensor<float>>(train), &std::cerr);
    nn::save_checkpoint(out, model.to_checkpoint());
    std::ofstream(fs::path(out).replace_extension(".history.csv")) << [&] {
        std::ostringstream s;
        history.write_csv(s);
        return s.str();
    }();
    if (!latents_csv.empty()) {
        experiment::LatentTable t;
        const auto z = embed::encode_all(model, std::span<const Tensor<float>>(set.samples));
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            t.ids.push_back(manifest.entries[i].source_id);
            t.labels.push_back(manifest.entries[i].label);
            t.rows.push_back(z[i]);
        }
        experiment::write_latents_csv(t, latents_csv);
    }
    std::cout << "trained " << embed::variant_name(cfg.embedder.variant) << " for " << history.epochs.size()
              << " epochs, final loss " << history.epochs.back().mean_loss << " (" << history.seconds << " s)\n";
    return 0;
}

int cmd_cluster(const std::string& latents, const std::string& centroids, std::size_t k, double m,
                std::uint64_t seed, const std::string& out, const std::string& model_out)
{
    const auto t = experiment::read_latents_csv(latents);
    const auto x = matrix_of(t);
    cluster::Matrix u;
    if (!centroids.empty()) {
        std::ifstream in(centroids);
        if (!in)
            throw std::runtime_error("cannot open " + centroids);
        nlohmann::json j;
        in >> j;
        const auto model = cluster::cluster_model_from_json(j);
        u = cluster::assign(model, x, model.config.m);
    } else {
        if (k == 0)
            k = std::set<std::string>(t.labels.begin(), t.labels.end()).size();
        cluster::FuzzyConfig cfg;
        cfg.n_clusters = k;
        cfg.m = m;
        cfg.seed = seed;
        const auto model = cluster::fit(x, cfg);
        u = model.memberships;
        if (!model_out.empty())
            std::ofstream(model_out) << cluster::to_json(model).dump(2) << '\n';
        std::cerr << "converged after " << model.iterations_run << " iterations\n";
    }
    std::ofstream labels(out);
    if (!labels)
        throw std::runtime_error("cannot write " + out);
    cluster::write_labels_csv(labels, t.ids, cluster::harden(u));
    return 0;
}

int cmd_evaluate(const std::string& labels_path, const std::string& manifest_path, const metrics::OverlapOptions& opt)
{
    const auto manifest = data::load_manifest(manifest_path, {.check_images_exist = false});
    std::map<std::string, std::string> label_of;
    for (const auto& e : manifest.entries)
        label_of[e.source_id] = e.label;
    std::ifstream in(labels_path);
    if (!in)
        throw std::runtime_error("cannot open " + labels_path);
    std::string line;
    std::getline(in, line);
    std::vector<int> clusters, classes;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto fields = data::split_csv_line(line);
        if (fields.size() != 2)
            throw std::runtime_error(labels_path + ": expected source_id,cluster rows");
        const auto it = label_of.find(fields[0]);
        if (it == label_of.end())
            throw std::runtime_error(labels_path + ": '" + fields[0] + "' is not in the manifest");
        clusters.push_back(std::stoi(fields[1]));
        classes.push_back(manifest.class_id(it->second));
    }
    const nlohmann::json j = {{"samples", clusters.size()},
                              {"purity", metrics::purity(clusters, classes)},
                              {"overlaps", metrics::overlaps(clusters, classes, opt)},
                              {"overlap_mode", metrics::overlap_mode_name(opt.mode)},
                              {"overlap_direction", metrics::overlap_direction_name(opt.direction)}};
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_classify(const std::string& train_csv, const std::string& test_csv, const std::string& head, int folds,
                 std::uint64_t seed)
{
    const auto train = experiment::read_latents_csv(train_csv);
    const auto test = experiment::read_latents_csv(test_csv);
    std::set<std::string> class_set(train.labels.begin(), train.labels.end());
    class_set.insert(test.labels.begin(), test.labels.end());
    const std::vector<std::string> classes(class_set.begin(), class_set.end());
    const auto y_train = label_ids(train.labels, classes);
    const auto y_test = label_ids(test.labels, classes);
    const auto x_train = matrix_of(train);
    const auto x_test = matrix_of(test);
    nlohmann::json out;
    if (head == "ridge" || head == "both") {
        // stratified-enough round robin folds over a seeded permutation
        std::vector<std::size_t> order(y_train.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::vector<std::size_t>> f(static_cast<std::size_t>(folds));
        for (std::size_t i = 0; i < order.size(); ++i)
            f[i % f.size()].push_back(order[i]);
        const auto best = supervised::grid_search(x_train, y_train, classes.size(), supervised::log_grid(-6, 2),
                                                  supervised::log_grid(-4, 1), f);
        const auto m = supervised::ridge_fit(x_train, y_train, classes.size(), best.lambda, best.gamma);
        out["ridge"] = {{"lambda", best.lambda},
                        {"gamma", best.gamma},
                        {"validation_accuracy", best.accuracy},
                        {"test_accuracy", metrics::accuracy(supervised::ridge_predict(m, x_test), y_test)}};
    }
    if (head == "fc" || head == "both") {
        supervised::FcConfig cfg;
        cfg.seed = seed;
        const Tensor<float> xt({train.rows.size(), train.dim()}, std::vector<float>(x_train.data(), x_train.data() + x_train.size()));
        const Tensor<float> xs({test.rows.size(), test.dim()}, std::vector<float>(x_test.data(), x_test.data() + x_test.size()));
        auto r = supervised::fc_train(xt, std::span<const int>(y_train), classes.size(), cfg);
        out["fc"] = {{"test_accuracy", metrics::accuracy(r.model.predict(xs), y_test)},
                     {"final_loss", r.loss_history.back()}};
    }
    if (out.is_null())
        throw std::invalid_argument("unknown head '" + head + "' (ridge, fc, both)");
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_run(const PipelineFlags& f, bool quiet)
{
    const auto cfg = f.resolve();
    const auto record = experiment::run(cfg, quiet ? nullptr : &std::cerr);
    std::cout << experiment::format_row(record) << '\n';
    std::cout << "record: " << (cfg.output_dir / "record.json").string() << " (" << record.wall_clock_seconds << " s)\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& text_out, const std::string& csv_out)
{
    std::vector<experiment::ExperimentRecord> records;
    for (const auto& p : paths)
        records.push_back(experiment::load_record(p));
    const auto rep = experiment::render_report(records);
    if (text_out.empty())
        std::cout << rep.text;
    else
        std::ofstream(text_out) << rep.text;
    if (!csv_out.empty())
        std::ofstream(csv_out) << rep.csv;
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Unsupervised plankton image pipeline"};
    app.require_subcommand(1);

    PipelineFlags pf;
    auto* extract = app.add_subcommand("extract", "run the frozen backbone over a manifest into a feature store");
    pf.attach(extract);

    auto* train = app.add_subcommand("train", "train an AE/VAE on the training split");
    pf.attach(train);
    std::string ckpt_out = "embedder.ckpt", latents_out;
    train->add_option("--out", ckpt_out, "checkpoint path");
    train->add_option("--latents", latents_out, "also write latents of every sample as CSV");

    auto* clus = app.add_subcommand("cluster", "fuzzy c-means over a latent CSV");
    std::string cl_latents, cl_centroids, cl_out = "labels.csv", cl_model;
    std::size_t cl_k = 0;
    double cl_m = 2.0;
    std::uint64_t cl_seed = 0;
    clus->add_option("--latents", cl_latents, "latent CSV (source_id,class_label,z_1..)")->required();
    clus->add_option("--centroids", cl_centroids, "assign with frozen centroids from a cluster JSON");
    clus->add_option("-k,--clusters", cl_k, "number of clusters (default: number of labels)");
    clus->add_option("--m", cl_m, "fuzzifier");
    clus->add_option("--seed", cl_seed, "initialization seed");
    clus->add_option("--out", cl_out, "labels CSV");
    clus->add_option("--model-out", cl_model, "cluster model JSON");

    auto* eval = app.add_subcommand("evaluate", "purity and overlaps of a labels CSV");
    std::string ev_labels, ev_manifest, ev_mode = "collisions", ev_dir = "class_majority";
    eval->add_option("--labels", ev_labels, "source_id,cluster CSV")->required();
    eval->add_option("--manifest", ev_manifest, "manifest with ground truth")->required();
    eval->add_option("--overlap-mode", ev_mode, "collisions, pairs or distinct");
    eval->add_option("--overlap-direction", ev_dir, "class_majority or cluster_majority");

    auto* cls = app.add_subcommand("classify", "supervised heads over latent CSVs");
    std::string cs_train, cs_test, cs_head = "ridge";
    int cs_folds = 5;
    std::uint64_t cs_seed = 0;
    cls->add_option("--train", cs_train, "training latents CSV")->required();
    cls->add_option("--test", cs_test, "test latents CSV")->required();
    cls->add_option("--head", cs_head, "ridge, fc or both");
    cls->add_option("--folds", cs_folds, "grid search folds");
    cls->add_option("--seed", cs_seed, "seed");

    auto* run = app.add_subcommand("run", "full experiment from a config");
    pf.attach(run);
    bool quiet = false;
    run->add_flag("-q,--quiet", quiet, "no per-epoch log");

    auto* report = app.add_subcommand("report", "tables from experiment records");
    std::vector<std::string> records;
    std::string rp_text, rp_csv;
    report->add_option("records", records, "record.json files")->required();
    report->add_option("--text", rp_text, "write the text report here instead of stdout");
    report->add_option("--csv", rp_csv, "CSV table");

    auto* exp = app.add_subcommand("export-latents", "latents of one repeat as CSV");
    std::string ex_record, ex_out = "latents.csv";
    int ex_repeat = 0;
    exp->add_option("--record", ex_record, "record.json")->required();
    exp->add_option("--repeat", ex_repeat, "repeat index");
    exp->add_option("--out", ex_out, "CSV path");

    auto* smoke = app.add_subcommand("make-smoke", "write the synthetic smoke dataset");
    std::string sm_root = "smoke";
    smoke->add_option("--root", sm_root, "target directory");

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        for (const auto* out : {&ckpt_out, &latents_out, &cl_out, &cl_model, &rp_text, &rp_csv, &ex_out})
            if (!out->empty() && fs::path(*out).has_parent_path())
                fs::create_directories(fs::path(*out).parent_path());
        if (*extract)
            return cmd_extract(pf);
        if (*train)
            return cmd_train(pf, ckpt_out, latents_out);
        if (*clus)
            return cmd_cluster(cl_latents, cl_centroids, cl_k, cl_m, cl_seed, cl_out, cl_model);
        if (*eval)
            return cmd_evaluate(ev_labels, ev_manifest,
                                {metrics::parse_overlap_mode(ev_mode), metrics::parse_overlap_direction(ev_dir)});
        if (*cls)
            return cmd_classify(cs_train, cs_test, cs_head, cs_folds, cs_seed);
        if (*run)
            return cmd_run(pf, quiet);
        if (*report)
            return cmd_report(records, rp_text, rp_csv);
        if (*exp) {
            experiment::export_latents(ex_record, ex_repeat, ex_out);
            return 0;
        }
        if (*smoke) {
            std::cout << experiment::make_smoke_dataset(sm_root).string() << '\n';
            return 0;
        }
    } catch (const experiment::StageError& e) {
        std::cerr << "plankton " << name << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "plankton " << name << ": [" << name << "] " << e.what() << '\n';
        return 1;
    }
    return 0;
}
