#include "lacovl/csl.hpp"

#include <cmath>

namespace lacovl {

Tensor minmax_shift(const Tensor& d_mat) {
    if (d_mat.size() == 0) throw ShapeMismatch("minmax_shift: empty matrix");
    Tensor hi = reduce_max_all(d_mat);
    Tensor lo = reduce_min_all(d_mat);
    Tensor shift = broadcast_scalar(add(hi, lo), d_mat.shape());
    return sub(shift, d_mat);
}

namespace {

std::vector<double> l1_norms(const Tensor& m, bool rows) {
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(rows ? r : c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[rows ? i : j] += std::fabs(m.values()[i * c + j]);
    return out;
}

Tensor l1_normalize(const Tensor& m, bool rows) {
    std::vector<double> norms = l1_norms(m, rows);
    for (std::size_t i = 0; i < norms.size(); ++i)
        if (norms[i] < 1e-12)
            throw ZeroRow("cross attention: L1 norm underflow at " +
                          std::string(rows ? "row " : "column ") + std::to_string(i));
    Tensor n = Tensor::from_data({norms.size()}, std::move(norms));
    return rows ? mul_colvec(m, reciprocal(n)) : mul_rowvec(m, reciprocal(n));
}

}  // namespace

std::pair<Tensor, Tensor> cross_attention_weights(const Tensor& s_shift, AlphaReading reading) {
    if (s_shift.rank() != 2 || s_shift.dim(0) != s_shift.dim(1))
        throw ShapeMismatch("cross_attention_weights: expected square, got " +
                            shape_str(s_shift.shape()));
    const std::size_t n = s_shift.dim(0);

    double total = 0.0;
    for (double v : s_shift.values()) total += std::fabs(v);
    if (total < 1e-12) {
        // degenerate constant-zero similarity: every token weighted equally
        Tensor uniform = Tensor::full({n}, 1.0 / static_cast<double>(n));
        return {uniform, uniform};
    }

    const bool alpha1_rows = reading == AlphaReading::Spec;
    // alpha1: one weight per anchor token (key axis); alpha2: per positive
    // token (query axis).
    Tensor alpha1 = softmax(sum_axis(l1_normalize(s_shift, alpha1_rows), 0, false), 0);
    Tensor alpha2 = softmax(sum_axis(l1_normalize(s_shift, !alpha1_rows), 1, false), 0);
    return {alpha1, alpha2};
}

CslScale::CslScale(ParamRegistry& reg, const std::string& prefix, std::size_t d_model,
                   std::size_t d_e)
    : d_e(d_e) {
    ln = LayerNorm(reg, prefix + ".ln", d_model);
    phi = Linear(reg, prefix + ".phi", d_model, 2 * d_e);
    back = Linear(reg, prefix + ".back", d_e, d_model);
    ln2 = LayerNorm(reg, prefix + ".ln2", d_model);
    fc1 = Linear(reg, prefix + ".fc1", d_model, 4 * d_model);
    fc2 = Linear(reg, prefix + ".fc2", 4 * d_model, d_model);
}

std::pair<Tensor, Tensor> CslScale::project(const Tensor& x_group) const {
    Tensor p = phi.forward(ln.forward(x_group));
    return {slice_cols(p, 0, d_e), slice_cols(p, d_e, 2 * d_e)};
}

Csl::Csl(ParamRegistry& reg, const std::string& prefix, const RunConfig& cfg)
    : tokens_(cfg.tokens_per_scale()), reading_(cfg.alpha_reading) {
    for (std::size_t i = 0; i < 3; ++i)
        scales_.emplace_back(reg, prefix + ".s" + std::to_string(i + 1), cfg.d_model, cfg.d_e);
    head_cls_ = reg.add(prefix + ".head.cls", {1, cfg.d_model}, ParamRegistry::Init::FanInUniform,
                        cfg.d_model);
    head_enc_ = TransformerEncoder(reg, prefix + ".head.enc", cfg.d_model, cfg.head_depth,
                                   cfg.head_heads);
    head_out_ = Linear(reg, prefix + ".head.out", cfg.d_model, cfg.num_classes);
}

std::pair<Tensor, Tensor> Csl::update_pair(std::size_t scale, const Tensor& x_anchor,
                                           const Tensor& x_positive, CslPairState* state) const {
    const CslScale& sc = scales_[scale];
    auto [k1, v1] = sc.project(x_anchor);
    auto [q2, v2] = sc.project(x_positive);
    Tensor d_mat = pairwise_euclidean(q2, k1);  // rows: positive queries, cols: anchor keys
    Tensor s_shift = minmax_shift(d_mat);
    auto [alpha1, alpha2] = cross_attention_weights(s_shift, reading_);
    if (state) {
        state->d_mat = d_mat;
        state->s_shift = s_shift;
        state->alpha1 = alpha1;
        state->alpha2 = alpha2;
    }
    auto branch = [&sc](const Tensor& x, const Tensor& alpha, const Tensor& v) {
        Tensor reweighted = mul_colvec(sc.back.forward(v), alpha);
        Tensor h = sc.ln2.forward(add(x, reweighted));
        return sc.fc2.forward(gelu(sc.fc1.forward(h)));
    };
    return {branch(x_anchor, alpha1, v1), branch(x_positive, alpha2, v2)};
}

std::pair<Tensor, Tensor> Csl::forward(const Tensor& x_anchor, const Tensor& x_positive,
                                       std::vector<CslPairState>* dump) const {
    if (dump) dump->assign(3, CslPairState{});
    std::vector<Tensor> a_groups, p_groups;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t n = tokens_[i];
        Tensor xa = slice_rows(x_anchor, offset, offset + n);
        Tensor xp = slice_rows(x_positive, offset, offset + n);
        auto [aa, ap] = update_pair(i, xa, xp, dump ? &(*dump)[i] : nullptr);
        a_groups.push_back(aa);
        p_groups.push_back(ap);
        offset += n;
    }
    return {visual_logits(a_groups), visual_logits(p_groups)};
}

Tensor Csl::visual_logits(const std::vector<Tensor>& groups) const {
    std::vector<Tensor> parts{head_cls_};
    for (const Tensor& g : groups) parts.push_back(g);
    Tensor seq = head_enc_.forward(concat_rows(parts));
    Tensor cls = slice_rows(seq, 0, 1);
    Tensor logits = head_out_.forward(cls);
    return reshape(logits, {logits.dim(1)});
}

}  // namespace lacovl
