#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lacovl/backbones.hpp"
#include "lacovl/config.hpp"
#include "lacovl/nn.hpp"

namespace lacovl {

// Dense branch: rowwise softmax over scaled scores.
Tensor dense_attention(const Tensor& s);

// Sparse branch: relu(s)^2 normalized per query row with an eps-guarded
// denominator; all-negative rows collapse to zeros.
Tensor sparse_attention(const Tensor& s, double eps);

// Convex per-row mix of the two branches. gate_logits is (N,1) (or (N,N) for
// element-wise gating); returns sigmoid(gate_logits) and the mixed map.
std::pair<Tensor, Tensor> gated_fusion(const Tensor& a_dense, const Tensor& a_sparse,
                                       const Tensor& gate_logits);

struct BgcaProjections {
    Tensor q;            // (N, d_h)
    Tensor gate_logits;  // (N, gate_channels); undefined when gating is off
    Tensor k;            // (N, d_h)
    Tensor v;            // (N, d_h)
};

// Inspectable intermediate state, one entry per attention head.
struct BgcaAttentionState {
    std::vector<Tensor> s;
    std::vector<Tensor> a_dense;
    std::vector<Tensor> a_sparse;
    std::vector<Tensor> a_mixed;
    Tensor g;  // sigmoid gate, (N, gate_channels); undefined when gating is off
    double eps = 0.0;
};

struct BgcaScale {
    Linear wq;       // emits d_h (+ gate channels when fused)
    Linear wg;       // separate gate head (gate_mode == Separate)
    Linear wk;
    Linear wv;
    Linear wproj;    // d_h -> dim
    BatchNorm bn;
    std::size_t d_h = 0;
    std::size_t heads = 1;
    std::size_t gate_channels = 0;  // 0 disables gating (plain dense attention)
    GateMode gate_mode = GateMode::Fused;
    GateGranularity granularity = GateGranularity::PerQuery;
    double eps = 1e-6;

    BgcaScale() = default;
    BgcaScale(ParamRegistry& reg, const std::string& prefix, std::size_t dim, std::size_t tokens,
              const RunConfig& cfg, bool gated);

    BgcaProjections project(const Tensor& f_ir, const Tensor& f_face) const;
    // Residual fusion output BN(f_ir + proj(mixed . v)). BN spans the batch,
    // so this returns the pre-BN tensor; the caller applies bn over the
    // concatenated batch.
    Tensor forward_pre_bn(const Tensor& f_ir, const Tensor& f_face,
                          BgcaAttentionState* state = nullptr) const;
};

struct TokenBundle {
    Tensor x;      // (sum tokens, d_model), scale 1 tokens first
    Tensor z_cls;  // (d_model,)
};

// Landmark-guided adaptive encoder: per-scale fusion, projection into a
// shared token space, then a transformer over the concatenated sequence.
class Lgae {
public:
    Lgae() = default;
    Lgae(ParamRegistry& reg, const std::string& prefix, const RunConfig& cfg);

    // Joint forward over a batch (batch-norm statistics span all samples).
    std::vector<TokenBundle> encode_batch(const std::vector<MultiScaleFeatureSet>& batch,
                                          const ForwardCtx& ctx,
                                          std::vector<BgcaAttentionState>* dump = nullptr) const;

    TokenBundle encode(const MultiScaleFeatureSet& ms, const ForwardCtx& ctx,
                       std::vector<BgcaAttentionState>* dump = nullptr) const;

    const std::vector<std::size_t>& tokens_per_scale() const { return tokens_; }

private:
    bool landmark_guidance_ = true;
    bool use_bgca_ = true;
    std::vector<BgcaScale> scales_;
    std::vector<Linear> unify_;
    Tensor cls_token_;
    TransformerEncoder encoder_;
    std::vector<std::size_t> tokens_;
};

}  // namespace lacovl
