#include "lacovl/backbones.hpp"

#include <cmath>
#include <set>

namespace lacovl {

Tensor patchify(const ImageSample& img, std::size_t patch) {
    const std::size_t s = img.size;
    if (patch == 0 || s % patch != 0)
        throw ShapeMismatch("patchify: patch " + std::to_string(patch) + " does not divide image " +
                            std::to_string(s));
    const std::size_t side = s / patch;
    const std::size_t tokens = side * side;
    const std::size_t dim = patch * patch * 3;
    std::vector<double> data(tokens * dim);
    for (std::size_t ty = 0; ty < side; ++ty)
        for (std::size_t tx = 0; tx < side; ++tx) {
            double* row = data.data() + (ty * side + tx) * dim;
            std::size_t k = 0;
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t py = 0; py < patch; ++py)
                    for (std::size_t px = 0; px < patch; ++px)
                        row[k++] = img.at(c, ty * patch + py, tx * patch + px);
        }
    return Tensor::from_data({tokens, dim}, std::move(data));
}

AppearanceEncoder::AppearanceEncoder(ParamRegistry& reg, const std::string& prefix,
                                     const RunConfig& cfg, bool frozen)
    : patches(cfg.scale_patches) {
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const std::size_t in_dim = patches[i] * patches[i] * 3;
        embed.emplace_back(reg, prefix + ".s" + std::to_string(i + 1), in_dim,
                           cfg.scale_channels[i], frozen);
    }
}

std::vector<Tensor> AppearanceEncoder::forward(const ImageSample& img) const {
    std::vector<Tensor> grids;
    grids.reserve(embed.size());
    for (std::size_t i = 0; i < embed.size(); ++i)
        grids.push_back(gelu(embed[i].forward(patchify(img, patches[i]))));
    return grids;
}

TeacherImageEncoder::TeacherImageEncoder(ParamRegistry& reg, const std::string& prefix,
                                         std::size_t d_clip) {
    readout = Linear(reg, prefix, 8 * 8 * 3, d_clip, /*frozen=*/true);
}

Tensor TeacherImageEncoder::forward(const ImageSample& img) const {
    const std::size_t s = img.size;
    if (s % 8 != 0) throw ShapeMismatch("teacher pooling needs image size divisible by 8");
    const std::size_t block = s / 8;
    std::vector<double> pooled(8 * 8 * 3, 0.0);
    const double inv = 1.0 / static_cast<double>(block * block);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t gy = 0; gy < 8; ++gy)
            for (std::size_t gx = 0; gx < 8; ++gx) {
                double acc = 0.0;
                for (std::size_t y = 0; y < block; ++y)
                    for (std::size_t x = 0; x < block; ++x)
                        acc += img.at(c, gy * block + y, gx * block + x);
                pooled[(c * 8 + gy) * 8 + gx] = acc * inv;
            }
    NoGradGuard ng;  // frozen readout of a leaf: never part of a graph
    return readout.forward_vec(Tensor::from_data({8 * 8 * 3}, std::move(pooled)));
}

std::string PromptBank::render(std::size_t cls) const {
    std::string out = template_text;
    const std::string marker = "[class]";
    std::size_t pos = out.find(marker);
    while (pos != std::string::npos) {
        out.replace(pos, marker.size(), class_names[cls]);
        pos = out.find(marker, pos + class_names[cls].size());
    }
    return out;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Normalize until the computed norm is exactly 1.0 so a later renormalization
// is a bitwise no-op.
void normalize_fixpoint(std::vector<double>& v) {
    for (int iter = 0; iter < 16; ++iter) {
        double sq = 0.0;
        for (double x : v) sq += x * x;
        const double n = std::sqrt(sq);
        if (n == 1.0) return;
        for (double& x : v) x /= n;
    }
}

}  // namespace

PromptBank build_prompt_bank(const std::vector<std::string>& class_names, std::size_t template_id,
                             std::size_t d_clip) {
    if (template_id >= kPromptTemplates.size())
        throw ConfigInvalid("prompt template id out of range: " + std::to_string(template_id));
    std::set<std::string> seen;
    for (const std::string& name : class_names)
        if (!seen.insert(name).second) throw DuplicateClassName(name);

    PromptBank bank;
    bank.class_names = class_names;
    bank.template_text = kPromptTemplates[template_id];

    const std::size_t C = class_names.size();
    std::vector<std::vector<double>> rows;
    rows.reserve(C);
    for (std::size_t c = 0; c < C; ++c) {
        const std::string prompt = bank.render(c);
        for (std::uint64_t salt = 0;; ++salt) {
            Rng rng(Rng(fnv1a(prompt)).split(salt).seed());
            std::vector<double> v(d_clip);
            for (double& x : v) x = rng.normal();
            normalize_fixpoint(v);
            bool ok = true;
            for (const auto& prev : rows) {
                double cos = 0.0;
                for (std::size_t i = 0; i < d_clip; ++i) cos += v[i] * prev[i];
                if (std::fabs(cos) >= 0.9) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                rows.push_back(std::move(v));
                break;
            }
        }
    }
    std::vector<double> flat;
    flat.reserve(C * d_clip);
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    bank.t_fix = Tensor::from_data({C, d_clip}, std::move(flat));
    return bank;
}

}  // namespace lacovl
