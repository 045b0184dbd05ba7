#pragma once

#include <string>
#include <vector>

#include "lacovl/common.hpp"
#include "lacovl/rng.hpp"

namespace lacovl {

// One RGB image with pixels in [0,1], stored channel-major (c,h,w).
struct ImageSample {
    std::vector<double> pixels;
    std::size_t size = 0;  // height == width
    std::size_t label = 0;
    std::string id;

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return pixels[(c * size + y) * size + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return pixels[(c * size + y) * size + x];
    }
};

struct Dataset {
    std::vector<ImageSample> samples;
    std::size_t num_classes = 0;

    std::size_t size() const { return samples.size(); }
    // Sample indices grouped by label, in file order.
    std::vector<std::vector<std::size_t>> by_class() const;
};

// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const ImageSample& img);
ImageSample read_ppm(const std::string& path, std::size_t expected_size);

// Directory layout: labels.csv (id,label) + images/<id>.ppm.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir, std::size_t image_size, std::size_t num_classes);

// Seven glyph classes with per-sample translation, brightness jitter and
// pixel noise; same seed reproduces the exact byte content.
Dataset synth_dataset(std::size_t n_per_class, std::size_t image_size, std::uint64_t seed);

// Fraction of samples a nearest-centroid classifier on raw pixels gets right
// (leave-one-in; used to show the synthetic task is not pixel-trivial).
double nearest_centroid_accuracy(const Dataset& ds);

}  // namespace lacovl
