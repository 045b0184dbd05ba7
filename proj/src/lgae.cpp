#include "lacovl/lgae.hpp"

#include <cmath>

namespace lacovl {

Tensor dense_attention(const Tensor& s) { return softmax(s, -1); }

Tensor sparse_attention(const Tensor& s, double eps) {
    Tensor r = relu_squared(s);
    Tensor denom = add_scalar(sum_axis(r, 1, true), eps);
    return mul_colvec(r, reciprocal(denom));
}

std::pair<Tensor, Tensor> gated_fusion(const Tensor& a_dense, const Tensor& a_sparse,
                                       const Tensor& gate_logits) {
    Tensor g = sigmoid(gate_logits);
    Tensor one_minus_g = add_scalar(neg(g), 1.0);
    Tensor mixed;
    if (g.rank() == 2 && g.dim(1) == a_dense.dim(1)) {
        mixed = add(mul(a_dense, g), mul(a_sparse, one_minus_g));
    } else {
        mixed = add(mul_colvec(a_dense, g), mul_colvec(a_sparse, one_minus_g));
    }
    return {g, mixed};
}

BgcaScale::BgcaScale(ParamRegistry& reg, const std::string& prefix, std::size_t dim,
                     std::size_t tokens, const RunConfig& cfg, bool gated)
    : d_h(cfg.d_h),
      heads(cfg.bgca_heads),
      gate_mode(cfg.gate_mode),
      granularity(cfg.gate_granularity),
      eps(cfg.attn_eps) {
    if (gated) {
        switch (granularity) {
            case GateGranularity::PerQuery: gate_channels = 1; break;
            case GateGranularity::PerHead: gate_channels = heads; break;
            case GateGranularity::PerElement: gate_channels = tokens; break;
        }
    }
    if (gated && gate_mode == GateMode::Fused) {
        wq = Linear(reg, prefix + ".wq", dim, d_h + gate_channels);
    } else {
        wq = Linear(reg, prefix + ".wq", dim, d_h);
        if (gated) wg = Linear(reg, prefix + ".wg", dim, gate_channels);
    }
    wk = Linear(reg, prefix + ".wk", dim, d_h);
    wv = Linear(reg, prefix + ".wv", dim, d_h);
    wproj = Linear(reg, prefix + ".wproj", d_h, dim);
    bn = BatchNorm(reg, prefix + ".bn", dim);
}

BgcaProjections BgcaScale::project(const Tensor& f_ir, const Tensor& f_face) const {
    if (f_ir.dim(0) != f_face.dim(0))
        throw ShapeMismatch("bgca: token counts differ, " + shape_str(f_ir.shape()) + " vs " +
                            shape_str(f_face.shape()));
    BgcaProjections p;
    if (gate_channels > 0 && gate_mode == GateMode::Fused) {
        Tensor qg = wq.forward(f_ir);
        p.q = slice_cols(qg, 0, d_h);
        p.gate_logits = slice_cols(qg, d_h, d_h + gate_channels);
    } else {
        p.q = wq.forward(f_ir);
        if (gate_channels > 0) p.gate_logits = wg.forward(f_ir);
    }
    p.k = wk.forward(f_face);
    p.v = wv.forward(f_face);
    return p;
}

Tensor BgcaScale::forward_pre_bn(const Tensor& f_ir, const Tensor& f_face,
                                 BgcaAttentionState* state) const {
    BgcaProjections p = project(f_ir, f_face);
    const std::size_t dh = d_h / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (state) state->eps = eps;

    Tensor g_all;
    if (gate_channels > 0) {
        g_all = sigmoid(p.gate_logits);
        if (state) state->g = g_all;
    }

    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = slice_cols(p.q, h * dh, (h + 1) * dh);
        Tensor k = slice_cols(p.k, h * dh, (h + 1) * dh);
        Tensor v = slice_cols(p.v, h * dh, (h + 1) * dh);
        Tensor s = mul_scalar(matmul(q, transpose2d(k)), inv_scale);
        Tensor mixed;
        Tensor a_dense = dense_attention(s);
        Tensor a_sparse;
        if (gate_channels == 0) {
            mixed = a_dense;  // plain cross attention (no gated sparse branch)
        } else {
            a_sparse = sparse_attention(s, eps);
            Tensor gate = g_all;
            if (granularity == GateGranularity::PerHead) gate = slice_cols(g_all, h, h + 1);
            Tensor one_minus = add_scalar(neg(gate), 1.0);
            if (granularity == GateGranularity::PerElement) {
                mixed = add(mul(a_dense, gate), mul(a_sparse, one_minus));
            } else {
                mixed = add(mul_colvec(a_dense, gate), mul_colvec(a_sparse, one_minus));
            }
        }
        if (state) {
            state->s.push_back(s);
            state->a_dense.push_back(a_dense);
            if (a_sparse.defined()) state->a_sparse.push_back(a_sparse);
            state->a_mixed.push_back(mixed);
        }
        head_outs.push_back(matmul(mixed, v));
    }
    Tensor attended = heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return add(f_ir, wproj.forward(attended));
}

Lgae::Lgae(ParamRegistry& reg, const std::string& prefix, const RunConfig& cfg)
    : landmark_guidance_(cfg.ablation.landmark_guidance),
      use_bgca_(cfg.ablation.bgca),
      tokens_(cfg.tokens_per_scale()) {
    if (landmark_guidance_) {
        for (std::size_t i = 0; i < 3; ++i)
            scales_.emplace_back(reg, prefix + ".bgca.s" + std::to_string(i + 1),
                                 cfg.scale_channels[i], tokens_[i], cfg, use_bgca_);
    }
    for (std::size_t i = 0; i < 3; ++i)
        unify_.emplace_back(reg, prefix + ".unify.s" + std::to_string(i + 1),
                            cfg.scale_channels[i], cfg.d_model);
    cls_token_ = reg.add(prefix + ".cls", {1, cfg.d_model}, ParamRegistry::Init::FanInUniform,
                         cfg.d_model);
    encoder_ = TransformerEncoder(reg, prefix + ".enc", cfg.d_model, cfg.encoder_depth,
                                  cfg.encoder_heads);
}

std::vector<TokenBundle> Lgae::encode_batch(const std::vector<MultiScaleFeatureSet>& batch,
                                            const ForwardCtx& ctx,
                                            std::vector<BgcaAttentionState>* dump) const {
    const std::size_t B = batch.size();
    if (dump) dump->assign(3, BgcaAttentionState{});
    // fused[b][i]: expression-relevant grid of sample b at scale i
    std::vector<std::vector<Tensor>> fused(B, std::vector<Tensor>(3));
    for (std::size_t i = 0; i < 3; ++i) {
        if (!landmark_guidance_) {
            for (std::size_t b = 0; b < B; ++b) fused[b][i] = batch[b].appearance[i];
            continue;
        }
        std::vector<Tensor> pre;
        pre.reserve(B);
        for (std::size_t b = 0; b < B; ++b) {
            BgcaAttentionState* st = (dump && b == 0) ? &(*dump)[i] : nullptr;
            pre.push_back(scales_[i].forward_pre_bn(batch[b].appearance[i], batch[b].geometry[i], st));
        }
        // batch-norm statistics span batch x tokens
        Tensor stacked = B == 1 ? pre[0] : concat_rows(pre);
        Tensor normed = scales_[i].bn.forward(stacked, ctx);
        const std::size_t n = tokens_[i];
        for (std::size_t b = 0; b < B; ++b)
            fused[b][i] = B == 1 ? normed : slice_rows(normed, b * n, (b + 1) * n);
    }

    std::vector<TokenBundle> out;
    out.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<Tensor> parts{cls_token_};
        for (std::size_t i = 0; i < 3; ++i) parts.push_back(unify_[i].forward(fused[b][i]));
        Tensor seq = encoder_.forward(concat_rows(parts));
        TokenBundle bundle;
        bundle.z_cls = reshape(slice_rows(seq, 0, 1), {seq.dim(1)});
        bundle.x = slice_rows(seq, 1, seq.dim(0));
        out.push_back(std::move(bundle));
    }
    return out;
}

TokenBundle Lgae::encode(const MultiScaleFeatureSet& ms, const ForwardCtx& ctx,
                         std::vector<BgcaAttentionState>* dump) const {
    return encode_batch({ms}, ctx, dump)[0];
}

}  // namespace lacovl
