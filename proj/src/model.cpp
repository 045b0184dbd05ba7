#include "lacovl/model.hpp"

namespace lacovl {

Model::Model(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    reg_.set_seed(cfg_.seed);
    appearance_ = AppearanceEncoder(reg_, "app", cfg_, /*frozen=*/false);
    if (cfg_.ablation.landmark_guidance)
        geometry_ = AppearanceEncoder(reg_, "geo", cfg_, /*frozen=*/true);
    lgae_ = Lgae(reg_, "lgae", cfg_);
    csl_ = Csl(reg_, "csl", cfg_);
    if (cfg_.ablation.vles) {
        teacher_ = TeacherImageEncoder(reg_, "teacher", cfg_.d_clip);
        bank_ = build_prompt_bank(cfg_.class_names, cfg_.prompt_template, cfg_.d_clip);
        vles_ = Vles(reg_, "vles", cfg_, bank_.t_fix);
    }
}

MultiScaleFeatureSet Model::extract_features(const ImageSample& img) const {
    if (img.size != cfg_.image_size)
        throw ShapeMismatch("image size " + std::to_string(img.size) + " != configured " +
                            std::to_string(cfg_.image_size));
    MultiScaleFeatureSet ms;
    ms.appearance = appearance_.forward(img);
    if (cfg_.ablation.landmark_guidance) ms.geometry = geometry_.forward(img);
    return ms;
}

Model::TrainOutputs Model::forward_train(const PairBatch& batch, const ForwardCtx& ctx) {
    const std::size_t B = batch.size();
    if (B == 0 || batch.anchors.size() != B || batch.positives.size() != B)
        throw ShapeMismatch("forward_train: inconsistent pair batch");

    // anchors occupy [0,B), positives [B,2B); batch-norm sees all of them
    std::vector<MultiScaleFeatureSet> feats;
    feats.reserve(2 * B);
    for (const ImageSample& img : batch.anchors) feats.push_back(extract_features(img));
    for (const ImageSample& img : batch.positives) feats.push_back(extract_features(img));
    std::vector<TokenBundle> bundles = lgae_.encode_batch(feats, ctx);

    std::vector<Tensor> vis_a_rows, vis_p_rows, sem_a_rows, sem_p_rows;
    for (std::size_t b = 0; b < B; ++b) {
        auto [vis_a, vis_p] = csl_.forward(bundles[b].x, bundles[B + b].x);
        vis_a_rows.push_back(reshape(vis_a, {1, vis_a.dim(0)}));
        vis_p_rows.push_back(reshape(vis_p, {1, vis_p.dim(0)}));
        if (cfg_.ablation.vles) {
            Tensor sem_a = vles_.forward(bundles[b].z_cls, teacher_.forward(batch.anchors[b]));
            Tensor sem_p = vles_.forward(bundles[B + b].z_cls, teacher_.forward(batch.positives[b]));
            sem_a_rows.push_back(reshape(sem_a, {1, sem_a.dim(0)}));
            sem_p_rows.push_back(reshape(sem_p, {1, sem_p.dim(0)}));
        }
    }
    TrainOutputs out;
    out.y_vis_a = B == 1 ? vis_a_rows[0] : concat_rows(vis_a_rows);
    out.y_vis_p = B == 1 ? vis_p_rows[0] : concat_rows(vis_p_rows);
    if (cfg_.ablation.vles) {
        out.y_sem_a = B == 1 ? sem_a_rows[0] : concat_rows(sem_a_rows);
        out.y_sem_p = B == 1 ? sem_p_rows[0] : concat_rows(sem_p_rows);
    }
    return out;
}

Tensor Model::scores(const ImageSample& img) const {
    NoGradGuard ng;
    const ForwardCtx ctx = ForwardCtx::eval();
    TokenBundle bundle = lgae_.encode(extract_features(img), ctx);
    if (cfg_.ablation.vles) return vles_.forward(bundle.z_cls, teacher_.forward(img));
    // visual-branch fallback: the image pairs with itself
    auto [vis, vis_p] = csl_.forward(bundle.x, bundle.x);
    (void)vis_p;
    return vis;
}

std::size_t argmax_lowest(const Tensor& scores) {
    const auto& v = scores.values();
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::size_t Model::predict(const ImageSample& img) const { return argmax_lowest(scores(img)); }

std::pair<Tensor, Tensor> Model::embedding(const ImageSample& img) const {
    if (!cfg_.ablation.vles) throw ConfigInvalid("embedding export needs ablation.vles=true");
    NoGradGuard ng;
    const ForwardCtx ctx = ForwardCtx::eval();
    TokenBundle bundle = lgae_.encode(extract_features(img), ctx);
    Tensor v_m;
    Tensor sem = vles_.forward(bundle.z_cls, teacher_.forward(img), &v_m);
    return {v_m, sem};
}

void Model::dump_attention(const ImageSample& img, std::vector<BgcaAttentionState>& lgae_state,
                           std::vector<CslPairState>& csl_state) const {
    NoGradGuard ng;
    const ForwardCtx ctx = ForwardCtx::eval();
    TokenBundle bundle = lgae_.encode(extract_features(img), ctx, &lgae_state);
    csl_.forward(bundle.x, bundle.x, &csl_state);
}

}  // namespace lacovl
