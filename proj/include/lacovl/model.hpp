#pragma once

#include <optional>
#include <vector>

#include "lacovl/backbones.hpp"
#include "lacovl/config.hpp"
#include "lacovl/csl.hpp"
#include "lacovl/lgae.hpp"
#include "lacovl/vles.hpp"

namespace lacovl {

// Anchor/positive image pairs sharing a label; the unit of training.
struct PairBatch {
    std::vector<ImageSample> anchors;
    std::vector<ImageSample> positives;
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
};

class Model {
public:
    explicit Model(const RunConfig& cfg);

    struct TrainOutputs {
        Tensor y_vis_a;  // (B, C)
        Tensor y_vis_p;
        Tensor y_sem_a;  // undefined when the semantic branch is disabled
        Tensor y_sem_p;
    };

    TrainOutputs forward_train(const PairBatch& batch, const ForwardCtx& ctx);

    // Anchor-only inference scores: semantic logits, or visual logits from a
    // self-paired pass when the semantic branch is off. Ties in predict
    // break toward the lowest class index.
    Tensor scores(const ImageSample& img) const;
    std::size_t predict(const ImageSample& img) const;

    // v_m embedding and scores for the export surface (semantic branch only).
    std::pair<Tensor, Tensor> embedding(const ImageSample& img) const;

    void dump_attention(const ImageSample& img, std::vector<BgcaAttentionState>& lgae_state,
                        std::vector<CslPairState>& csl_state) const;

    ParamRegistry& registry() { return reg_; }
    const ParamRegistry& registry() const { return reg_; }
    const RunConfig& config() const { return cfg_; }
    const PromptBank& prompt_bank() const { return bank_; }
    const TeacherImageEncoder& teacher() const { return teacher_; }
    const AppearanceEncoder& geometry_encoder() const { return geometry_; }
    bool has_semantic_branch() const { return cfg_.ablation.vles; }

    MultiScaleFeatureSet extract_features(const ImageSample& img) const;

private:
    RunConfig cfg_;
    ParamRegistry reg_;
    AppearanceEncoder appearance_;
    AppearanceEncoder geometry_;  // frozen; only built with landmark guidance
    TeacherImageEncoder teacher_;
    PromptBank bank_;
    Lgae lgae_;
    Csl csl_;
    Vles vles_;
};

std::size_t argmax_lowest(const Tensor& scores);

}  // namespace lacovl
