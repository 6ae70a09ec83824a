#include "plankton/experiment/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "plankton/cluster/fuzzy_cmeans.hpp"
#include "plankton/data/image.hpp"
#include "plankton/embed/embedder.hpp"
#include "plankton/experiment/latents.hpp"
#include "plankton/features/feature_store.hpp"
#include "plankton/hashing.hpp"
#include "plankton/nn/checkpoint.hpp"
#include "plankton/supervised/fc.hpp"
#include "plankton/supervised/ridge.hpp"

namespace plankton::experiment {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

StageError::StageError(std::string stage, int repeat, const std::string& what)
    : std::runtime_error("[" + stage + (repeat >= 0 ? ", repeat " + std::to_string(repeat) : std::string()) + "] "
                         + what),
      stage_(std::move(stage)), repeat_(repeat)
{
}

std::string algorithm_name(features::Layout layout, embed::Variant variant)
{
    const std::string prefix = layout == features::Layout::image ? "IMG" : "FE_" + std::string(features::layout_name(layout));
    return prefix + "-" + std::string(embed::variant_name(variant));
}

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

template <typename F>
auto staged(const char* stage, int repeat, F&& f)
{
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, repeat, e.what());
    }
}

cluster::Matrix rows_of(const std::vector<std::vector<float>>& latents, const std::vector<std::size_t>& ids)
{
    const std::size_t z = latents.empty() ? 0 : latents.front().size();
    cluster::Matrix m(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(z));
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t k = 0; k < z; ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = latents[ids[i]][k];
    return m;
}

std::vector<int> labels_of(const std::vector<int>& class_ids, const std::vector<std::size_t>& ids)
{
    std::vector<int> out;
    out.reserve(ids.size());
    for (const auto i : ids)
        out.push_back(class_ids[i]);
    return out;
}

nlohmann::json optional_json(const std::optional<double>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return j.at(key).get<double>();
}

} // namespace

std::size_t extract_to_store(const data::Manifest& manifest, const fs::path& model_path, const fs::path& store_root,
                             std::size_t batch_size, std::ostream* log)
{
    if (model_path.empty())
        throw std::runtime_error("no ONNX model configured");
    const std::string hash = sha256_file(model_path);
    auto store = fs::exists(store_root / "index.json") ? features::FeatureStore::open(store_root)
                                                       : features::FeatureStore::open_or_create(store_root, features::Layout::raw, hash);
    if (store.model_hash() != hash)
        throw std::runtime_error("feature store " + store_root.string() + " was built with model " + store.model_hash()
                                 + ", configured model is " + hash);
    std::vector<const data::ManifestEntry*> missing;
    for (const auto& e : manifest.entries)
        if (!store.contains(e.source_id))
            missing.push_back(&e);
    if (missing.empty())
        return 0;

    const features::FeatureExtractor extractor(model_path, batch_size);
    for (std::size_t begin = 0; begin < missing.size(); begin += batch_size) {
        const std::size_t end = std::min(missing.size(), begin + batch_size);
        std::vector<data::ImageTensor> batch;
        for (std::size_t i = begin; i < end; ++i)
            batch.push_back(data::preprocess(data::decode_image(missing[i]->image_path), missing[i]->source_id));
        std::vector<features::ReshapedFeature> out;
        for (auto& f : extractor.extract(batch))
            out.push_back(features::reshape_features(f, store.layout()));
        store.store(out);
        if (log)
            *log << "extracted " << end << "/" << missing.size() << '\n';
    }
    return missing.size();
}

SampleSet load_samples(const ExperimentConfig& config, const data::Manifest& manifest, std::ostream* log)
{
    SampleSet set;
    const auto start = Clock::now();
    const features::Layout layout = config.embedder.layout;
    if (layout == features::Layout::image) {
        for (const auto& e : manifest.entries)
            set.samples.push_back(data::preprocess(data::decode_image(e.image_path), e.source_id).data);
        set.extraction_seconds = seconds_since(start);
        return set;
    }

    std::size_t missing = manifest.entries.size();
    if (fs::exists(config.feature_store / "index.json")) {
        const auto store = features::FeatureStore::open(config.feature_store);
        missing = 0;
        for (const auto& e : manifest.entries)
            missing += !store.contains(e.source_id);
    }
    if (missing > 0) {
        if (config.onnx_model.empty())
            throw std::runtime_error("feature store " + config.feature_store.string() + " lacks " + std::to_string(missing)
                                     + " of " + std::to_string(manifest.entries.size())
                                     + " samples and no onnx_model is configured");
        set.extracted = extract_to_store(manifest, config.onnx_model, config.feature_store, config.extract_batch, log);
    }

    const auto store = features::FeatureStore::open(config.feature_store);
    std::vector<std::string> ids;
    for (const auto& e : manifest.entries)
        ids.push_back(e.source_id);
    for (auto& f : store.load(ids, store.layout()))
        set.samples.push_back(features::reshape_features(std::move(f), layout).data);
    set.extraction_seconds = seconds_since(start);
    return set;
}

bool ExperimentRecord::hash_matches() const { return experiment::config_hash(config) == config_hash; }

ExperimentRecord run(const ExperimentConfig& config, std::ostream* log)
{
    const auto start = Clock::now();
    config.validate();
    fs::create_directories(config.output_dir);

    ExperimentRecord record;
    record.config = config.snapshot();
    record.config_hash = experiment::config_hash(record.config);
    record.algorithm = algorithm_name(config.embedder.layout, config.embedder.variant);
    record.latent_dim = config.embedder.latent_dim;
    record.created = utc_now();
    const fs::path record_path = config.output_dir / "record.json";

    auto fail = [&](const StageError& e) {
        record.error = e.what();
        record.wall_clock_seconds = seconds_since(start);
        save_record(record, record_path);
        throw e;
    };

    try {
        const auto manifest = staged("ingest", -1, [&] { return data::load_manifest(config.manifest); });
        record.dataset = manifest.dataset_name;
        record.n_classes = manifest.classes.size();
        const auto class_ids = manifest.class_ids();
        const std::size_t k = config.clustering.n_clusters ? config.clustering.n_clusters : manifest.classes.size();
        const auto plan = staged("split", -1, [&] {
            return data::make_splits(manifest, 1.0 - config.test_ratio, config.folds, config.split_seed);
        });

        const SampleSet set = staged("extract", -1, [&] { return load_samples(config, manifest, log); });
        record.stage_seconds["extraction"] = set.extraction_seconds;

        std::vector<std::string> id_list;
        for (const auto& e : manifest.entries)
            id_list.push_back(e.source_id);

        std::vector<std::size_t> train_pos(manifest.entries.size(), 0);
        for (std::size_t i = 0; i < plan.train_ids.size(); ++i)
            train_pos[plan.train_ids[i]] = i;

        for (int r = 0; r < config.repeats; ++r) {
            RepeatResult rep;
            rep.index = r;
            rep.seed = config.seeds[static_cast<std::size_t>(r)];
            const fs::path dir = config.output_dir / ("repeat_" + std::to_string(r));
            fs::create_directories(dir);

            const auto folds = data::redraw_folds(manifest, plan, config.folds, rep.seed);
            rep.validation_fold = static_cast<std::size_t>(r % config.folds);
            const auto fit_ids = folds.fit_ids(rep.validation_fold);
            const auto& val_ids = folds.folds[rep.validation_fold];

            auto t = Clock::now();
            embed::EmbedderConfig ec = config.embedder;
            ec.seed = rep.seed;
            auto model = staged("train", r, [&] { return embed::EmbedderModel<float>(ec); });
            std::vector<Tensor<float>> fit_samples;
            for (const auto i : fit_ids)
                fit_samples.push_back(set.samples[i]);
            const auto history = staged("train", r, [&] { return embed::train(model, std::span<const Tensor<float>>(fit_samples), log); });
            fit_samples.clear();
            const auto latents = staged("train", r, [&] { return embed::encode_all(model, std::span<const Tensor<float>>(set.samples)); });
            rep.stage_seconds["training"] = seconds_since(t);

            t = Clock::now();
            cluster::FuzzyConfig fcfg = config.clustering;
            fcfg.n_clusters = k;
            fcfg.seed = rep.seed;
            const auto cm = staged("cluster", r, [&] { return cluster::fit(rows_of(latents, fit_ids), fcfg); });
            const auto val_labels = cluster::harden(cluster::assign(cm, rows_of(latents, val_ids), fcfg.m));
            const auto test_labels = cluster::harden(cluster::assign(cm, rows_of(latents, plan.test_ids), fcfg.m));
            rep.cluster_iterations = cm.iterations_run;
            rep.stage_seconds["clustering"] = seconds_since(t);

            t = Clock::now();
            staged("evaluate", r, [&] {
                const auto truth = labels_of(class_ids, plan.test_ids);
                rep.purity = metrics::purity(test_labels, truth);
                rep.overlaps = metrics::overlaps(test_labels, truth, config.overlap);
                rep.validation_purity = metrics::purity(val_labels, labels_of(class_ids, val_ids));
                rep.train_purity = metrics::purity(cluster::harden(cm.memberships), labels_of(class_ids, fit_ids));
                return 0;
            });
            rep.stage_seconds["evaluation"] = seconds_since(t);

            t = Clock::now();
            const bool want_ridge = config.supervised == SupervisedHeads::ridge || config.supervised == SupervisedHeads::both;
            const bool want_fc = config.supervised == SupervisedHeads::fc || config.supervised == SupervisedHeads::both;
            if (want_ridge || want_fc) {
                staged("supervised", r, [&] {
                    const auto x_train = rows_of(latents, plan.train_ids);
                    const auto y_train = labels_of(class_ids, plan.train_ids);
                    const auto x_test = rows_of(latents, plan.test_ids);
                    const auto y_test = labels_of(class_ids, plan.test_ids);
                    if (want_ridge) {
                        std::vector<std::vector<std::size_t>> fold_rows;
                        for (const auto& f : folds.folds) {
                            std::vector<std::size_t> rows;
                            for (const auto i : f)
                                rows.push_back(train_pos[i]);
                            fold_rows.push_back(std::move(rows));
                        }
                        const supervised::RidgeOptions opts{config.ridge.center_targets};
                        const auto best = supervised::grid_search(
                            x_train, y_train, record.n_classes,
                            supervised::log_grid(config.ridge.lambda_lo, config.ridge.lambda_hi),
                            supervised::log_grid(config.ridge.gamma_lo, config.ridge.gamma_hi), fold_rows, opts);
                        const auto m = supervised::ridge_fit(x_train, y_train, record.n_classes, best.lambda, best.gamma, opts);
                        rep.ridge_accuracy = metrics::accuracy(supervised::ridge_predict(m, x_test), y_test);
                        rep.ridge_search = supervised::to_json(best);
                    }
                    if (want_fc) {
                        supervised::FcConfig fc = config.fc;
                        fc.seed = rep.seed;
                        const Tensor<float> xt({static_cast<std::size_t>(x_train.rows()), static_cast<std::size_t>(x_train.cols())},
                                               std::vector<float>(x_train.data(), x_train.data() + x_train.size()));
                        auto res = supervised::fc_train(xt, std::span<const int>(y_train), record.n_classes, fc);
                        const Tensor<float> xs({static_cast<std::size_t>(x_test.rows()), static_cast<std::size_t>(x_test.cols())},
                                               std::vector<float>(x_test.data(), x_test.data() + x_test.size()));
                        rep.fc_accuracy = metrics::accuracy(res.model.predict(xs), y_test);
                    }
                    return 0;
                });
                rep.stage_seconds["supervised"] = seconds_since(t);
            }

            staged("persist", r, [&] {
                const fs::path ckpt = dir / "embedder.ckpt";
                nn::save_checkpoint(ckpt, model.to_checkpoint());
                std::ofstream hist(dir / "history.csv");
                history.write_csv(hist);
                std::ofstream cl(dir / "clusters.json");
                cl << cluster::to_json(cm).dump(2) << '\n';
                std::vector<std::string> test_names;
                for (const auto i : plan.test_ids)
                    test_names.push_back(id_list[i]);
                std::ofstream lab(dir / "test_labels.csv");
                cluster::write_labels_csv(lab, test_names, test_labels);

                LatentTable table;
                std::vector<std::string> split(manifest.entries.size(), "test");
                for (const auto i : fit_ids)
                    split[i] = "train";
                for (const auto i : val_ids)
                    split[i] = "validation";
                for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
                    table.ids.push_back(id_list[i]);
                    table.labels.push_back(manifest.entries[i].label);
                    table.splits.push_back(split[i]);
                    table.rows.push_back(latents[i]);
                }
                save_latents(table, dir / "latents.npy");

                rep.artifacts = {{"checkpoint", ckpt.generic_string()},
                                 {"history", (dir / "history.csv").generic_string()},
                                 {"clusters", (dir / "clusters.json").generic_string()},
                                 {"labels", (dir / "test_labels.csv").generic_string()},
                                 {"latents", (dir / "latents.npy").generic_string()}};
                return 0;
            });

            for (const auto& [stage, s] : rep.stage_seconds)
                record.stage_seconds[stage] += s;
            if (log)
                *log << "repeat " << r << ": purity " << rep.purity << ", overlaps " << rep.overlaps << '\n';
            record.repeats.push_back(std::move(rep));
        }
    } catch (const StageError& e) {
        fail(e);
    }

    auto summarize = [&](const char* name, auto get) {
        std::vector<double> v;
        for (const auto& rep : record.repeats)
            if (const std::optional<double> x = get(rep))
                v.push_back(*x);
        if (!v.empty())
            record.summary[name] = metrics::aggregate(v);
    };
    summarize("purity", [](const RepeatResult& r) { return std::optional<double>(r.purity); });
    summarize("overlaps", [](const RepeatResult& r) { return std::optional<double>(r.overlaps); });
    summarize("validation_purity", [](const RepeatResult& r) { return std::optional<double>(r.validation_purity); });
    summarize("ridge_accuracy", [](const RepeatResult& r) { return r.ridge_accuracy; });
    summarize("fc_accuracy", [](const RepeatResult& r) { return r.fc_accuracy; });

    record.wall_clock_seconds = seconds_since(start);
    save_record(record, record_path);
    return record;
}

nlohmann::json to_json(const ExperimentRecord& r)
{
    nlohmann::json repeats = nlohmann::json::array();
    for (const auto& rep : r.repeats)
        repeats.push_back({{"index", rep.index},
                           {"seed", rep.seed},
                           {"validation_fold", rep.validation_fold},
                           {"purity", rep.purity},
                           {"overlaps", rep.overlaps},
                           {"validation_purity", rep.validation_purity},
                           {"train_purity", rep.train_purity},
                           {"cluster_iterations", rep.cluster_iterations},
                           {"ridge_accuracy", optional_json(rep.ridge_accuracy)},
                           {"fc_accuracy", optional_json(rep.fc_accuracy)},
                           {"ridge_search", rep.ridge_search},
                           {"stage_seconds", rep.stage_seconds},
                           {"artifacts", rep.artifacts}});
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& [name, s] : r.summary) {
        summary[name] = metrics::to_json(s, name, r.config_hash);
        summary[name]["max"] = s.max();
    }
    return {{"dataset", r.dataset},
            {"algorithm", r.algorithm},
            {"latent_dim", r.latent_dim},
            {"n_classes", r.n_classes},
            {"config", r.config},
            {"config_hash", r.config_hash},
            {"repeats", repeats},
            {"summary", summary},
            {"wall_clock_seconds", r.wall_clock_seconds},
            {"stage_seconds", r.stage_seconds},
            {"created", r.created},
            {"error", r.error}};
}

ExperimentRecord record_from_json(const nlohmann::json& j)
{
    ExperimentRecord r;
    r.dataset = j.at("dataset").get<std::string>();
    r.algorithm = j.at("algorithm").get<std::string>();
    r.latent_dim = j.at("latent_dim").get<std::size_t>();
    r.n_classes = j.value("n_classes", std::size_t{0});
    r.config = j.at("config");
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& x : j.at("repeats")) {
        RepeatResult rep;
        rep.index = x.at("index").get<int>();
        rep.seed = x.at("seed").get<std::uint64_t>();
        rep.validation_fold = x.at("validation_fold").get<std::size_t>();
        rep.purity = x.at("purity").get<double>();
        rep.overlaps = x.at("overlaps").get<int>();
        rep.validation_purity = x.value("validation_purity", 0.0);
        rep.train_purity = x.value("train_purity", 0.0);
        rep.cluster_iterations = x.value("cluster_iterations", 0);
        rep.ridge_accuracy = optional_from(x, "ridge_accuracy");
        rep.fc_accuracy = optional_from(x, "fc_accuracy");
        rep.ridge_search = x.value("ridge_search", nlohmann::json());
        rep.stage_seconds = x.value("stage_seconds", std::map<std::string, double>{});
        rep.artifacts = x.value("artifacts", std::map<std::string, std::string>{});
        r.repeats.push_back(std::move(rep));
    }
    for (const auto& [name, s] : j.at("summary").items())
        r.summary[name] = metrics::metric_summary_from_json(s);
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.stage_seconds = j.value("stage_seconds", std::map<std::string, double>{});
    r.created = j.value("created", "");
    r.error = j.value("error", "");
    return r;
}

void save_record(const ExperimentRecord& r, const fs::path& path)
{
    const fs::path tmp = fs::path(path).concat(".tmp");
    {
        std::ofstream out(tmp);
        if (!out)
            throw std::runtime_error("cannot write record " + path.string());
        out << to_json(r).dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

ExperimentRecord load_record(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open record " + path.string());
    nlohmann::json j;
    in >> j;
    return record_from_json(j);
}

std::string format_cell(const ExperimentRecord& r)
{
    const auto p = r.summary.find("purity");
    const auto o = r.summary.find("overlaps");
    if (p == r.summary.end() || o == r.summary.end())
        return "n/a";
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << p->second.mean << " ± " << p->second.std << " ("
        << std::setprecision(o->second.std == 0.0 && o->second.mean == std::round(o->second.mean) ? 0 : 1)
        << o->second.mean << " ± " << o->second.std << ")";
    return out.str();
}

std::string format_row(const ExperimentRecord& r)
{
    return r.dataset + " " + r.algorithm + " Z=" + std::to_string(r.latent_dim) + ": " + format_cell(r);
}

} // namespace plankton::experiment
