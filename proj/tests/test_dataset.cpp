#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lacovl/dataset.hpp"

using namespace lacovl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("lacovl_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("ppm roundtrip is exact") {
    Dataset ds = synth_dataset(1, 16, 123);
    fs::path dir = temp_dir("ppm");
    const ImageSample& img = ds.samples[0];
    write_ppm((dir / "x.ppm").string(), img);
    ImageSample back = read_ppm((dir / "x.ppm").string(), 16);
    CHECK(back.pixels == img.pixels);
}

TEST_CASE("ppm reader rejects junk") {
    fs::path dir = temp_dir("ppmbad");
    {
        std::ofstream f(dir / "bad.ppm", std::ios::binary);
        f << "P3\n2 2\n255\n";
    }
    CHECK_THROWS_AS(read_ppm((dir / "bad.ppm").string(), 2), IoError);
    CHECK_THROWS_AS(read_ppm((dir / "missing.ppm").string(), 2), IoError);
}

TEST_CASE("synthetic set: counts, determinism, labels") {
    Dataset a = synth_dataset(10, 32, 42);
    CHECK(a.size() == 70);
    CHECK(a.num_classes == 7);
    Dataset b = synth_dataset(10, 32, 42);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].pixels == b.samples[i].pixels);
        CHECK(a.samples[i].id == b.samples[i].id);
    }
    Dataset c = synth_dataset(10, 32, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size() && !any_diff; ++i)
        any_diff = a.samples[i].pixels != c.samples[i].pixels;
    CHECK(any_diff);
}

TEST_CASE("dataset directory roundtrip and byte determinism") {
    Dataset ds = synth_dataset(2, 16, 7);
    fs::path d1 = temp_dir("ds1"), d2 = temp_dir("ds2");
    save_dataset(d1.string(), ds);
    save_dataset(d2.string(), ds);
    CHECK(file_bytes(d1 / "labels.csv") == file_bytes(d2 / "labels.csv"));
    CHECK(file_bytes(d1 / "images" / (ds.samples[0].id + ".ppm")) ==
          file_bytes(d2 / "images" / (ds.samples[0].id + ".ppm")));

    Dataset loaded = load_dataset(d1.string(), 16, 7);
    REQUIRE(loaded.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(loaded.samples[i].pixels == ds.samples[i].pixels);
        CHECK(loaded.samples[i].label == ds.samples[i].label);
    }
}

TEST_CASE("loading an empty or missing directory fails loudly") {
    fs::path dir = temp_dir("empty");
    CHECK_THROWS_AS(load_dataset(dir.string(), 16, 7), IoError);
    {
        std::ofstream f(dir / "labels.csv");
        f << "id,label\n";
    }
    fs::create_directories(dir / "images");
    CHECK_THROWS_AS(load_dataset(dir.string(), 16, 7), EmptyDataset);
}

TEST_CASE("pixel centroids do not solve the synthetic task") {
    Dataset ds = synth_dataset(10, 32, 42);
    const double acc = nearest_centroid_accuracy(ds);
    CHECK(acc < 1.0);
    CHECK(acc > 1.0 / 7.0);  // but far better than chance: structure exists
}

TEST_CASE("by_class groups every sample") {
    Dataset ds = synth_dataset(3, 16, 5);
    auto groups = ds.by_class();
    REQUIRE(groups.size() == 7);
    for (const auto& g : groups) CHECK(g.size() == 3);
}
