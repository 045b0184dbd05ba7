#pragma once

#include <string>
#include <vector>

#include "lacovl/config.hpp"
#include "lacovl/nn.hpp"

namespace lacovl {

// Min-max shifting: S = max(D) + min(D) - D over the whole matrix, turning
// the smallest distance into the largest similarity.
Tensor minmax_shift(const Tensor& d_mat);

// Attention weights from a shifted similarity matrix (rows index positive
// queries, columns anchor keys): each side L1-normalizes along its own
// dimension, sums along the other, and softmaxes. An all-zero matrix (only
// possible for a constant-zero distance matrix) falls back to uniform
// weights. Swapped reading exchanges the two compositions.
std::pair<Tensor, Tensor> cross_attention_weights(const Tensor& s_shift,
                                                  AlphaReading reading = AlphaReading::Spec);

// Inspectable per-scale state for the dump interface.
struct CslPairState {
    Tensor d_mat;
    Tensor s_shift;
    Tensor alpha1;  // (N,) anchor-token weights
    Tensor alpha2;  // (N,) positive-token weights
};

struct CslScale {
    LayerNorm ln;        // before the shared projection
    Linear phi;          // shared projection to 2*d_e, split into (k|q, v)
    Linear back;         // d_e -> d_model before the residual add
    LayerNorm ln2;       // after the residual add
    Linear fc1;          // MLP d_model -> 4*d_model
    Linear fc2;
    std::size_t d_e = 0;

    CslScale() = default;
    CslScale(ParamRegistry& reg, const std::string& prefix, std::size_t d_model, std::size_t d_e);

    // (k|q, v) halves of the shared projection.
    std::pair<Tensor, Tensor> project(const Tensor& x_group) const;
};

// Cross Similarity Learning over the three scale-aligned token groups plus
// the visual prediction head.
class Csl {
public:
    Csl() = default;
    Csl(ParamRegistry& reg, const std::string& prefix, const RunConfig& cfg);

    // Token-wise reweighting of both branches for one scale group.
    std::pair<Tensor, Tensor> update_pair(std::size_t scale, const Tensor& x_anchor,
                                          const Tensor& x_positive,
                                          CslPairState* state = nullptr) const;

    // Full pass: split (sum tokens, d_model) sequences into the three scale
    // groups, update each, and classify. Returns (anchor logits, positive
    // logits), each (C,).
    std::pair<Tensor, Tensor> forward(const Tensor& x_anchor, const Tensor& x_positive,
                                      std::vector<CslPairState>* dump = nullptr) const;

    Tensor visual_logits(const std::vector<Tensor>& groups) const;

private:
    std::vector<CslScale> scales_;
    std::vector<std::size_t> tokens_;
    Tensor head_cls_;
    TransformerEncoder head_enc_;
    Linear head_out_;
    AlphaReading reading_ = AlphaReading::Spec;
};

}  // namespace lacovl
