#include "lacovl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lacovl {

namespace fs = std::filesystem;

std::vector<std::vector<std::size_t>> Dataset::by_class() const {
    std::vector<std::vector<std::size_t>> groups(num_classes);
    for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].label].push_back(i);
    return groups;
}

void write_ppm(const std::string& path, const ImageSample& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const std::size_t s = img.size;
    out << "P6\n" << s << " " << s << "\n255\n";
    std::vector<unsigned char> buf(3 * s * s);
    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double v = img.at(c, y, x);
                v = std::min(1.0, std::max(0.0, v));
                buf[(y * s + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write on " + path);
}

ImageSample read_ppm(const std::string& path, std::size_t expected_size) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError(path + ": not a binary PPM (P6)");
    auto next_int = [&]() {
        // skip whitespace and '#' comments between header fields
        int ch = in.peek();
        while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
            if (ch == '#') {
                std::string comment;
                std::getline(in, comment);
            } else {
                in.get();
            }
            ch = in.peek();
        }
        std::size_t v = 0;
        in >> v;
        return v;
    };
    const std::size_t w = next_int();
    const std::size_t h = next_int();
    const std::size_t maxval = next_int();
    in.get();  // single whitespace after maxval
    if (w != h) throw IoError(path + ": image must be square");
    if (maxval != 255) throw IoError(path + ": maxval must be 255");
    if (expected_size != 0 && w != expected_size)
        throw IoError(path + ": size " + std::to_string(w) + " != expected " +
                      std::to_string(expected_size));
    std::vector<unsigned char> buf(3 * w * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw IoError(path + ": truncated pixel data");
    ImageSample img;
    img.size = w;
    img.pixels.assign(3 * w * h, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = buf[(y * w + x) * 3 + c] / 255.0;
    return img;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "images");
    std::ofstream labels(fs::path(dir) / "labels.csv");
    if (!labels) throw IoError("cannot write labels.csv in " + dir);
    labels << "id,label\n";
    for (const ImageSample& img : ds.samples) {
        labels << img.id << "," << img.label << "\n";
        write_ppm((fs::path(dir) / "images" / (img.id + ".ppm")).string(), img);
    }
}

Dataset load_dataset(const std::string& dir, std::size_t image_size, std::size_t num_classes) {
    std::ifstream labels(fs::path(dir) / "labels.csv");
    if (!labels) throw IoError("cannot open labels.csv in " + dir);
    Dataset ds;
    ds.num_classes = num_classes;
    std::string line;
    if (!std::getline(labels, line) || line.rfind("id,label", 0) != 0)
        throw IoError(dir + "/labels.csv: missing id,label header");
    while (std::getline(labels, line)) {
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) throw IoError(dir + "/labels.csv: bad row '" + line + "'");
        ImageSample img = read_ppm((fs::path(dir) / "images" / (line.substr(0, comma) + ".ppm")).string(),
                                   image_size);
        img.id = line.substr(0, comma);
        img.label = static_cast<std::size_t>(std::stoull(line.substr(comma + 1)));
        if (img.label >= num_classes)
            throw IoError(dir + "/labels.csv: label " + std::to_string(img.label) +
                          " out of range for " + std::to_string(num_classes) + " classes");
        ds.samples.push_back(std::move(img));
    }
    if (ds.samples.empty()) throw EmptyDataset(dir + " contains no samples");
    return ds;
}

namespace {

double seg_dist(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double wx = px - ax, wy = py - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

// Signed intensity of the class glyph at (x,y) for a unit canvas centred on
// (cx,cy). Shapes are soft-edged so small translations change many pixels.
double glyph_intensity(std::size_t cls, double x, double y, double cx, double cy, double s) {
    const double r = 0.30 * s;      // glyph radius
    const double w = 0.06 * s;      // stroke width
    const double dx = x - cx, dy = y - cy;
    double dist = 1e9;
    switch (cls % 7) {
        case 0: {  // ring
            dist = std::fabs(std::sqrt(dx * dx + dy * dy) - r);
            break;
        }
        case 1: {  // plus
            dist = std::min(seg_dist(x, y, cx - r, cy, cx + r, cy),
                            seg_dist(x, y, cx, cy - r, cx, cy + r));
            break;
        }
        case 2: {  // two horizontal bars
            dist = std::min(seg_dist(x, y, cx - r, cy - 0.5 * r, cx + r, cy - 0.5 * r),
                            seg_dist(x, y, cx - r, cy + 0.5 * r, cx + r, cy + 0.5 * r));
            break;
        }
        case 3: {  // V
            dist = std::min(seg_dist(x, y, cx - r, cy - r, cx, cy + r),
                            seg_dist(x, y, cx + r, cy - r, cx, cy + r));
            break;
        }
        case 4: {  // X
            dist = std::min(seg_dist(x, y, cx - r, cy - r, cx + r, cy + r),
                            seg_dist(x, y, cx - r, cy + r, cx + r, cy - r));
            break;
        }
        case 5: {  // square outline
            dist = std::fabs(std::max(std::fabs(dx), std::fabs(dy)) - r);
            break;
        }
        default: {  // vertical bar
            dist = seg_dist(x, y, cx, cy - r, cx, cy + r);
            break;
        }
    }
    return std::max(0.0, 1.0 - dist / w);
}

}  // namespace

Dataset synth_dataset(std::size_t n_per_class, std::size_t image_size, std::uint64_t seed) {
    const std::size_t C = 7;
    Dataset ds;
    ds.num_classes = C;
    const double s = static_cast<double>(image_size);
    Rng root = Rng(seed).split("synth");
    for (std::size_t cls = 0; cls < C; ++cls) {
        for (std::size_t k = 0; k < n_per_class; ++k) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "c%zu_%03zu", cls, k);
            Rng rng = root.split(std::string(idbuf));
            ImageSample img;
            img.size = image_size;
            img.id = idbuf;
            img.label = cls;
            img.pixels.assign(3 * image_size * image_size, 0.0);

            const double cx = 0.5 * s + rng.uniform(-0.125, 0.125) * s;
            const double cy = 0.5 * s + rng.uniform(-0.125, 0.125) * s;
            const double brightness = rng.uniform(0.55, 0.95);
            const double channel_jitter[3] = {rng.uniform(0.9, 1.0), rng.uniform(0.9, 1.0),
                                              rng.uniform(0.9, 1.0)};
            for (std::size_t y = 0; y < image_size; ++y) {
                for (std::size_t x = 0; x < image_size; ++x) {
                    const double g = glyph_intensity(cls, x + 0.5, y + 0.5, cx, cy, s);
                    for (std::size_t c = 0; c < 3; ++c) {
                        double v = 0.12 + brightness * channel_jitter[c] * g;
                        v += rng.uniform(-0.10, 0.10);
                        v = std::min(1.0, std::max(0.0, v));
                        // quantize now so in-memory data equals the PPM roundtrip
                        img.at(c, y, x) = std::lround(v * 255.0) / 255.0;
                    }
                }
            }
            ds.samples.push_back(std::move(img));
        }
    }
    return ds;
}

double nearest_centroid_accuracy(const Dataset& ds) {
    if (ds.samples.empty()) throw EmptyDataset("nearest_centroid_accuracy on empty dataset");
    const std::size_t dim = ds.samples[0].pixels.size();
    std::vector<std::vector<double>> centroids(ds.num_classes, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (const ImageSample& img : ds.samples) {
        for (std::size_t i = 0; i < dim; ++i) centroids[img.label][i] += img.pixels[i];
        ++counts[img.label];
    }
    for (std::size_t c = 0; c < ds.num_classes; ++c)
        if (counts[c])
            for (double& v : centroids[c]) v /= static_cast<double>(counts[c]);
    std::size_t correct = 0;
    for (const ImageSample& img : ds.samples) {
        double best = 1e300;
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            if (!counts[c]) continue;
            double d2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double diff = img.pixels[i] - centroids[c][i];
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                best_c = c;
            }
        }
        correct += best_c == img.label;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

}  // namespace lacovl
