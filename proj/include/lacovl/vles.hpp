#pragma once

#include <string>

#include "lacovl/backbones.hpp"
#include "lacovl/config.hpp"
#include "lacovl/nn.hpp"

namespace lacovl {

// Instance-conditioned text features: the same alpha-scaled bias is added to
// every fixed class row, then rows are L2-renormalized. A zero bias leaves
// t_fix bit-identical (rows are stored at their normalization fixpoint).
Tensor instance_text(const Tensor& t_fix, const Tensor& delta_t, double alpha_scale);

// Vision-language enhancement: refine the class token with the frozen
// teacher embedding, generate the prompt bias, and score classes by scaled
// cosine similarity.
class Vles {
public:
    Vles() = default;
    Vles(ParamRegistry& reg, const std::string& prefix, const RunConfig& cfg, Tensor t_fix);

    // Cross attention with the class token as query and the teacher
    // embedding as key/value; accepts one (d_clip,) embedding or a
    // (K, d_clip) token stack.
    Tensor refine_visual(const Tensor& z_cls, const Tensor& f_tea) const;

    Tensor ecp_bias(const Tensor& z_tilde) const;     // tanh(W z + b), (d_clip,)
    Tensor project_visual(const Tensor& z_tilde) const;  // unit (d_clip,)

    Tensor semantic_logits(const Tensor& v_m, const Tensor& t_hat) const;  // (C,)

    // Full chain logits for one sample; exposes v_m via out-param for the
    // embedding-export surface.
    Tensor forward(const Tensor& z_cls, const Tensor& f_tea, Tensor* v_out = nullptr) const;

    const Tensor& t_fix() const { return t_fix_; }
    double tau() const { return tau_; }

private:
    Linear tea_proj_;   // d_clip -> d_model
    Linear attn_out_;
    Linear delta_;      // d_model -> d_clip
    Linear img_proj_;   // d_model -> d_clip
    Tensor t_fix_;
    double tau_ = 0.07;
    double alpha_scale_ = 0.1;
    bool residual_ = true;
    bool ecp_ = true;
    std::size_t d_model_ = 0;
};

}  // namespace lacovl
