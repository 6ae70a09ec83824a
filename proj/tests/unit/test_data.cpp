#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/imgproc.hpp>

#include "plankton/data/image.hpp"
#include "plankton/data/manifest.hpp"
#include "plankton/data/splits.hpp"
#include "plankton/npy.hpp"

using namespace plankton;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("plankton_data_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

data::Manifest synthetic_manifest(std::size_t classes, std::size_t per_class)
{
    data::Manifest m;
    m.dataset_name = "synthetic";
    for (std::size_t c = 0; c < classes; ++c) {
        m.classes.push_back("class" + std::to_string(c));
        for (std::size_t i = 0; i < per_class; ++i) {
            data::ManifestEntry e;
            e.source_id = "c" + std::to_string(c) + "_" + std::to_string(i) + ".png";
            e.label = m.classes.back();
            m.entries.push_back(e);
        }
    }
    return m;
}

} // namespace

TEST(Npy, RoundTripPreservesShapeAndValues)
{
    std::mt19937 rng(1);
    std::normal_distribution<float> d;
    std::vector<float> v(2 * 3 * 5);
    for (auto& x : v)
        x = d(rng);
    const auto bytes = npy::encode(v, {2, 3, 5});
    const auto t = npy::decode(bytes);
    EXPECT_EQ(t.shape(), (Shape{2, 3, 5}));
    EXPECT_TRUE(std::equal(v.begin(), v.end(), t.values().begin()));
}

TEST(Npy, HeaderIsAlignedAndDescribesFloat32)
{
    const auto bytes = npy::encode(std::vector<float>(7, 1.0f), {7});
    ASSERT_GT(bytes.size(), 10u);
    EXPECT_EQ(std::string(bytes.begin() + 1, bytes.begin() + 6), "NUMPY");
    const std::size_t header_len = bytes[8] | (bytes[9] << 8);
    EXPECT_EQ((10 + header_len) % 64, 0u);
    const std::string header(bytes.begin() + 10, bytes.begin() + 10 + static_cast<long>(header_len));
    EXPECT_NE(header.find("'<f4'"), std::string::npos);
    EXPECT_NE(header.find("(7,)"), std::string::npos);
}

TEST(Npy, ReadsFixtureWrittenByNumpy)
{
    const auto t = npy::read(fs::path(PLANKTON_TEST_DATA) / "goldens" / "output_00.npy");
    EXPECT_EQ(t.shape(), (Shape{1920, 4, 4}));
    EXPECT_TRUE(t.all_finite());
}

TEST(Npy, RejectsTruncatedAndForeignPayloads)
{
    auto bytes = npy::encode(std::vector<float>(8, 2.0f), {8});
    bytes.resize(bytes.size() - 4);
    EXPECT_THROW(npy::decode(bytes), std::runtime_error);
    const std::vector<std::uint8_t> junk{'n', 'o', 't', 'n', 'p', 'y', 0, 0, 0, 0, 0, 0};
    EXPECT_THROW(npy::decode(junk), std::runtime_error);
}

TEST(Manifest, ParsesHintsQuotesAndDatasetName)
{
    const auto dir = scratch("manifest");
    write_text(dir / "lensless.csv",
               "path,label,split\n"
               "a.png,copepod,train\n"
               "\"b,1.png\",copepod,test\n"
               "c.png,diatom,\n"
               "d.png,diatom\n");
    const auto m = data::load_manifest(dir / "lensless.csv", {.check_images_exist = false});
    EXPECT_EQ(m.dataset_name, "lensless");
    ASSERT_EQ(m.entries.size(), 4u);
    EXPECT_EQ(m.entries[1].source_id, "b,1.png");
    EXPECT_EQ(m.entries[1].image_path, dir / "b,1.png");
    EXPECT_EQ(m.entries[0].split, data::SplitHint::train);
    EXPECT_EQ(m.entries[1].split, data::SplitHint::test);
    EXPECT_EQ(m.entries[3].split, data::SplitHint::none);
    EXPECT_EQ(m.classes, (std::vector<std::string>{"copepod", "diatom"}));
    EXPECT_EQ(m.class_ids(), (std::vector<int>{0, 0, 1, 1}));
    EXPECT_FALSE(m.fully_hinted());
}

TEST(Manifest, DirectoryNameForGenericFileName)
{
    const auto dir = scratch("whoi22");
    write_text(dir / "manifest.csv", "path,label,split\na.png,x,\nb.png,x,\n");
    EXPECT_EQ(data::load_manifest(dir / "manifest.csv", {.check_images_exist = false}).dataset_name,
              "plankton_data_whoi22");
}

TEST(Manifest, ErrorsNameTheLine)
{
    const auto dir = scratch("manifest_bad");
    const auto expect_error = [&](const std::string& body, const std::string& fragment) {
        write_text(dir / "m.csv", body);
        try {
            data::load_manifest(dir / "m.csv", {.check_images_exist = false});
            ADD_FAILURE() << "no error for: " << body;
        } catch (const std::runtime_error& e) {
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
        }
    };
    expect_error("path,label,split\na.png,x,maybe\nb.png,x,\n", ":2");
    expect_error("path,label,split\na.png,x,\na.png,x,\n", "duplicate");
    expect_error("path,label,split\na.png,x,\nb.png,y,\nc.png,y,\n", "at least 2");
    expect_error("path,label,split\n", "no entries");
    expect_error("file,class\na.png,x\n", "header");
    write_text(dir / "m.csv", "path,label,split\nmissing.png,x,\nmissing2.png,x,\n");
    EXPECT_THROW(data::load_manifest(dir / "m.csv"), std::runtime_error);
}

TEST(Manifest, SaveLoadRoundTrip)
{
    const auto dir = scratch("manifest_rt");
    write_text(dir / "m.csv", "path,label,split\n\"q,1.png\",x,train\nb.png,x,\nc.png,y,test\nd.png,y,\n");
    const auto m = data::load_manifest(dir / "m.csv", {.check_images_exist = false});
    data::save_manifest(m, dir / "copy.csv");
    const auto back = data::load_manifest(dir / "copy.csv", {.check_images_exist = false});
    ASSERT_EQ(back.entries.size(), m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        EXPECT_EQ(back.entries[i].source_id, m.entries[i].source_id);
        EXPECT_EQ(back.entries[i].label, m.entries[i].label);
        EXPECT_EQ(back.entries[i].split, m.entries[i].split);
    }
}

TEST(Image, ResizeMatchesOpenCvBilinear)
{
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> d(0.0f, 255.0f);
    for (const auto& [w, h] : {std::pair<std::size_t, std::size_t>{37, 53}, {200, 150}, {128, 128}, {5, 9}}) {
        std::vector<float> plane(w * h);
        for (auto& v : plane)
            v = d(rng);
        const auto ours = data::resize_bilinear(plane, w, h, 128, 128);
        cv::Mat src(static_cast<int>(h), static_cast<int>(w), CV_32F, plane.data()), dst;
        cv::resize(src, dst, cv::Size(128, 128), 0, 0, cv::INTER_LINEAR);
        float worst = 0;
        for (int y = 0; y < 128; ++y)
            for (int x = 0; x < 128; ++x)
                worst = std::max(worst, std::abs(ours[static_cast<std::size_t>(y * 128 + x)] - dst.at<float>(y, x)));
        EXPECT_LT(worst, 1e-3f) << w << "x" << h;
    }
}

TEST(Image, PreprocessNormalizesAndReplicatesGray)
{
    data::Image gray{.width = 10, .height = 6, .channels = 1, .pixels = std::vector<float>(60, 255.0f)};
    const auto t = data::preprocess(gray, "g");
    EXPECT_EQ(t.data.shape(), (Shape{3, 128, 128}));
    for (std::size_t c = 0; c < 3; ++c) {
        const float want = (1.0f - data::kChannelMean[c]) / data::kChannelStd[c];
        EXPECT_NEAR(t.data[c * 128 * 128 + 777], want, 1e-5f);
    }
    data::Image bad{.width = 2, .height = 2, .channels = 2, .pixels = std::vector<float>(8)};
    EXPECT_THROW(data::preprocess(bad), std::invalid_argument);
}

TEST(Image, PngRoundTrip)
{
    const auto dir = scratch("png");
    data::Image img{.width = 4, .height = 3, .channels = 3, .pixels = {}};
    for (std::size_t i = 0; i < 36; ++i)
        img.pixels.push_back(static_cast<float>(i * 7));
    data::write_image(dir / "x.png", img);
    const auto back = data::decode_image(dir / "x.png");
    EXPECT_EQ(back.width, 4u);
    EXPECT_EQ(back.height, 3u);
    EXPECT_EQ(back.channels, 3u);
    EXPECT_EQ(back.pixels, img.pixels);
    EXPECT_THROW(data::decode_image(dir / "none.png"), std::runtime_error);
}

TEST(Splits, StratifiedPartitionAndFolds)
{
    const auto m = synthetic_manifest(3, 20);
    const auto plan = data::make_splits(m, 0.8, 5, 42);
    EXPECT_EQ(plan.train_ids.size() + plan.test_ids.size(), 60u);
    std::vector<std::size_t> all;
    std::set_union(plan.train_ids.begin(), plan.train_ids.end(), plan.test_ids.begin(), plan.test_ids.end(),
                   std::back_inserter(all));
    EXPECT_EQ(all.size(), 60u);
    const auto ids = m.class_ids();
    for (int c = 0; c < 3; ++c)
        EXPECT_EQ(std::count_if(plan.train_ids.begin(), plan.train_ids.end(), [&](auto i) { return ids[i] == c; }), 16);

    ASSERT_EQ(plan.folds.size(), 5u);
    std::multiset<std::size_t> covered;
    for (const auto& f : plan.folds) {
        covered.insert(f.begin(), f.end());
        for (int c = 0; c < 3; ++c) {
            const auto n = std::count_if(f.begin(), f.end(), [&](auto i) { return ids[i] == c; });
            EXPECT_TRUE(n == 3 || n == 4);
        }
    }
    EXPECT_EQ(std::vector<std::size_t>(covered.begin(), covered.end()), plan.train_ids);
    const auto fit = plan.fit_ids(2);
    EXPECT_EQ(fit.size() + plan.folds[2].size(), plan.train_ids.size());
}

TEST(Splits, SeedDeterminesPlan)
{
    const auto m = synthetic_manifest(2, 15);
    EXPECT_EQ(data::make_splits(m, 0.8, 3, 1), data::make_splits(m, 0.8, 3, 1));
    EXPECT_NE(data::make_splits(m, 0.8, 3, 1), data::make_splits(m, 0.8, 3, 2));
    const auto plan = data::make_splits(m, 0.8, 3, 1);
    const auto redrawn = data::redraw_folds(m, plan, 3, 9);
    EXPECT_EQ(redrawn.train_ids, plan.train_ids);
    EXPECT_EQ(redrawn.test_ids, plan.test_ids);
    EXPECT_EQ(data::split_plan_from_json(data::to_json(redrawn)), redrawn);
}

TEST(Splits, HintsAreKept)
{
    auto m = synthetic_manifest(2, 10);
    m.entries[0].split = data::SplitHint::test;
    m.entries[11].split = data::SplitHint::train;
    const auto plan = data::make_splits(m, 0.5, 2, 3);
    EXPECT_TRUE(std::binary_search(plan.test_ids.begin(), plan.test_ids.end(), 0u));
    EXPECT_TRUE(std::binary_search(plan.train_ids.begin(), plan.train_ids.end(), 11u));
}

TEST(Splits, RejectsBadArguments)
{
    const auto m = synthetic_manifest(2, 4);
    EXPECT_THROW(data::make_splits(m, 1.0, 2, 0), std::invalid_argument);
    EXPECT_THROW(data::make_splits(m, 0.5, 1, 0), std::invalid_argument);
    EXPECT_THROW(data::make_splits(m, 0.5, 5, 0), std::invalid_argument);
}
