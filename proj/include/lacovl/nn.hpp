#pragma once

#include <map>
#include <string>
#include <vector>

#include "lacovl/rng.hpp"
#include "lacovl/tensor.hpp"

namespace lacovl {

enum class Mode { Train, Eval };

// Forward-pass context. update_stats gates batch-norm running statistics so
// finite-difference probes can run the train-mode graph without side effects.
struct ForwardCtx {
    Mode mode = Mode::Train;
    bool update_stats = true;

    bool training() const { return mode == Mode::Train; }
    static ForwardCtx train() { return {Mode::Train, true}; }
    static ForwardCtx train_pure() { return {Mode::Train, false}; }
    static ForwardCtx eval() { return {Mode::Eval, false}; }
};

struct Parameter {
    Tensor tensor;
    std::string name;
    bool frozen = false;
};

// Owns every parameter and persistent buffer of one model, keyed by a unique
// dotted path. std::map keeps iteration order deterministic for the
// optimizer, checkpointing, and gradient checks.
class ParamRegistry {
public:
    enum class Init { Zeros, Ones, FanInUniform };

    // fan_in only matters for FanInUniform. The rng stream is derived from
    // the registry seed and the parameter name, so layout changes do not
    // reshuffle unrelated parameters.
    Tensor add(const std::string& name, Shape shape, Init init, std::size_t fan_in,
               bool frozen = false);
    // Register an externally computed constant (e.g. cached text features).
    Tensor add_constant(const std::string& name, Tensor value, bool frozen = true);
    // Mutable state that is not a parameter (batch-norm running stats).
    std::vector<double>& add_buffer(const std::string& name, std::vector<double> init);

    void set_seed(std::uint64_t seed) { seed_ = seed; }
    std::uint64_t seed() const { return seed_; }

    Parameter& at(const std::string& name);
    const std::map<std::string, Parameter>& params() const { return params_; }
    std::map<std::string, Parameter>& params() { return params_; }
    std::map<std::string, std::vector<double>>& buffers() { return buffers_; }
    const std::map<std::string, std::vector<double>>& buffers() const { return buffers_; }

    std::size_t trainable_count() const;  // element count over non-frozen params
    void zero_grad();

private:
    std::uint64_t seed_ = 0;
    std::map<std::string, Parameter> params_;
    std::map<std::string, std::vector<double>> buffers_;
};

struct Linear {
    Tensor w;  // (in, out)
    Tensor b;  // (out,), absent when bias=false
    bool has_bias = true;

    Linear() = default;
    Linear(ParamRegistry& reg, const std::string& prefix, std::size_t in, std::size_t out,
           bool frozen = false, bool bias = true);

    Tensor forward(const Tensor& x) const;      // (N,in) -> (N,out)
    Tensor forward_vec(const Tensor& x) const;  // (in,) -> (out,)
};

struct LayerNorm {
    Tensor scale;
    Tensor shift;
    double eps = 1e-5;

    LayerNorm() = default;
    LayerNorm(ParamRegistry& reg, const std::string& prefix, std::size_t dim, bool frozen = false);

    Tensor forward(const Tensor& x) const;  // normalizes over the last axis of (N,d)
};

// Per-channel normalization over the row axis of (N,d) with running
// statistics for eval mode. Population (biased) variance throughout.
struct BatchNorm {
    Tensor scale;
    Tensor shift;
    std::vector<double>* running_mean = nullptr;
    std::vector<double>* running_var = nullptr;
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNorm() = default;
    BatchNorm(ParamRegistry& reg, const std::string& prefix, std::size_t dim);

    Tensor forward(const Tensor& x, const ForwardCtx& ctx) const;
};

struct TransformerLayer {
    LayerNorm ln1;
    Linear qkv;  // (d, 3d)
    Linear out;  // (d, d)
    LayerNorm ln2;
    Linear fc1;  // (d, 4d)
    Linear fc2;  // (4d, d)
};

// Pre-norm encoder: x += MHSA(LN(x)); x += MLP(LN(x)); final LN at the top.
struct TransformerEncoder {
    std::vector<TransformerLayer> layers;
    LayerNorm final_ln;
    std::size_t heads = 1;
    std::size_t d_model = 0;

    TransformerEncoder() = default;
    TransformerEncoder(ParamRegistry& reg, const std::string& prefix, std::size_t d_model,
                       std::size_t depth, std::size_t heads);

    Tensor forward(const Tensor& x) const;  // (N,d) -> (N,d)
};

Tensor multi_head_self_attention(const Tensor& x, const Linear& qkv, const Linear& out,
                                 std::size_t heads);

}  // namespace lacovl
