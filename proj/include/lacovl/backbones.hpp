#pragma once

#include <string>
#include <vector>

#include "lacovl/config.hpp"
#include "lacovl/dataset.hpp"
#include "lacovl/nn.hpp"

namespace lacovl {

// Per-scale token grids from the two backbone streams. appearance[i] and
// geometry[i] always agree in token count.
struct MultiScaleFeatureSet {
    std::vector<Tensor> appearance;  // (tokens_i, dim_i)
    std::vector<Tensor> geometry;
};

// Flatten non-overlapping patches of one size: (tokens, patch*patch*3).
// Pure data movement; the result is a graph leaf.
Tensor patchify(const ImageSample& img, std::size_t patch);

// Trainable patch-embedding stream standing in for the appearance backbone:
// per scale, a linear map over flattened patches followed by gelu.
struct AppearanceEncoder {
    std::vector<Linear> embed;
    std::vector<std::size_t> patches;

    AppearanceEncoder() = default;
    AppearanceEncoder(ParamRegistry& reg, const std::string& prefix, const RunConfig& cfg,
                      bool frozen);

    std::vector<Tensor> forward(const ImageSample& img) const;
};

// Frozen CLIP-style image readout: average-pool to an 8x8 grid, then a fixed
// seeded linear map to d_clip. Output is a detached leaf.
struct TeacherImageEncoder {
    Linear readout;

    TeacherImageEncoder() = default;
    TeacherImageEncoder(ParamRegistry& reg, const std::string& prefix, std::size_t d_clip);

    Tensor forward(const ImageSample& img) const;  // (d_clip,)
};

struct PromptBank {
    std::vector<std::string> class_names;
    std::string template_text;
    Tensor t_fix;  // (C, d_clip), unit rows, frozen

    std::string render(std::size_t cls) const;
};

// Deterministic text-encoder stand-in: each rendered prompt is hashed into a
// seed for a unit vector. Rows are rejection-sampled until all pairwise
// |cos| < 0.9, then normalized to an exact fixpoint so renormalizing t_fix
// reproduces it bit for bit.
PromptBank build_prompt_bank(const std::vector<std::string>& class_names,
                             std::size_t template_id, std::size_t d_clip);

}  // namespace lacovl
