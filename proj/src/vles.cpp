#include "lacovl/vles.hpp"

#include <cmath>

namespace lacovl {

Tensor instance_text(const Tensor& t_fix, const Tensor& delta_t, double alpha_scale) {
    if (delta_t.rank() != 1 || delta_t.dim(0) != t_fix.dim(1))
        throw ShapeMismatch("instance_text: bias " + shape_str(delta_t.shape()) + " vs t_fix " +
                            shape_str(t_fix.shape()));
    Tensor shifted = add_rowvec(t_fix, mul_scalar(delta_t, alpha_scale));
    return l2_normalize_rows(shifted);
}

Vles::Vles(ParamRegistry& reg, const std::string& prefix, const RunConfig& cfg, Tensor t_fix)
    : t_fix_(std::move(t_fix)),
      tau_(cfg.tau),
      alpha_scale_(cfg.alpha_scale),
      residual_(cfg.teacher_residual),
      ecp_(cfg.ecp),
      d_model_(cfg.d_model) {
    tea_proj_ = Linear(reg, prefix + ".tea_proj", cfg.d_clip, cfg.d_model);
    attn_out_ = Linear(reg, prefix + ".attn_out", cfg.d_model, cfg.d_model);
    if (ecp_) delta_ = Linear(reg, prefix + ".delta", cfg.d_model, cfg.d_clip);
    img_proj_ = Linear(reg, prefix + ".img_proj", cfg.d_model, cfg.d_clip);
    reg.add_constant(prefix + ".t_fix", t_fix_, /*frozen=*/true);
}

Tensor Vles::refine_visual(const Tensor& z_cls, const Tensor& f_tea) const {
    Tensor keys = f_tea.rank() == 1 ? reshape(f_tea, {1, f_tea.dim(0)}) : f_tea;
    Tensor k_tea = tea_proj_.forward(keys);  // (K, d_model)
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_model_));
    Tensor scores = mul_scalar(matvec(k_tea, z_cls), inv_scale);  // (K,)
    Tensor weights = softmax(scores, 0);                          // single key -> exactly 1
    Tensor attended = matvec(transpose2d(k_tea), weights);        // (d_model,)
    Tensor projected = attn_out_.forward_vec(attended);
    return residual_ ? add(z_cls, projected) : projected;
}

Tensor Vles::ecp_bias(const Tensor& z_tilde) const {
    if (!ecp_) throw ConfigInvalid("ecp_bias called with model.ecp=false");
    return tanh_act(delta_.forward_vec(z_tilde));
}

Tensor Vles::project_visual(const Tensor& z_tilde) const {
    return l2_normalize_vec(img_proj_.forward_vec(z_tilde));
}

Tensor Vles::semantic_logits(const Tensor& v_m, const Tensor& t_hat) const {
    return mul_scalar(matvec(t_hat, v_m), 1.0 / tau_);
}

Tensor Vles::forward(const Tensor& z_cls, const Tensor& f_tea, Tensor* v_out) const {
    Tensor z_tilde = refine_visual(z_cls, f_tea);
    Tensor t_hat = ecp_ ? instance_text(t_fix_, ecp_bias(z_tilde), alpha_scale_) : t_fix_;
    Tensor v_m = project_visual(z_tilde);
    if (v_out) *v_out = v_m;
    return semantic_logits(v_m, t_hat);
}

}  // namespace lacovl
