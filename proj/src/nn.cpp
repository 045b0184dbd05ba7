#include "lacovl/nn.hpp"

#include <cmath>

namespace lacovl {

Tensor ParamRegistry::add(const std::string& name, Shape shape, Init init, std::size_t fan_in,
                          bool frozen) {
    if (params_.count(name)) throw ConfigInvalid("duplicate parameter name: " + name);
    std::vector<double> data(numel(shape), 0.0);
    switch (init) {
        case Init::Zeros: break;
        case Init::Ones: std::fill(data.begin(), data.end(), 1.0); break;
        case Init::FanInUniform: {
            Rng rng = Rng(seed_).split("param:" + name);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : data) v = rng.uniform(-bound, bound);
            break;
        }
    }
    Tensor t = Tensor::from_data(std::move(shape), std::move(data), !frozen);
    params_[name] = Parameter{t, name, frozen};
    return t;
}

Tensor ParamRegistry::add_constant(const std::string& name, Tensor value, bool frozen) {
    if (params_.count(name)) throw ConfigInvalid("duplicate parameter name: " + name);
    value.set_requires_grad(!frozen);
    params_[name] = Parameter{value, name, frozen};
    return value;
}

std::vector<double>& ParamRegistry::add_buffer(const std::string& name, std::vector<double> init) {
    if (buffers_.count(name)) throw ConfigInvalid("duplicate buffer name: " + name);
    return buffers_[name] = std::move(init);
}

Parameter& ParamRegistry::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigInvalid("unknown parameter: " + name);
    return it->second;
}

std::size_t ParamRegistry::trainable_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_)
        if (!p.frozen) n += p.tensor.size();
    return n;
}

void ParamRegistry::zero_grad() {
    for (auto& [name, p] : params_) p.tensor.zero_grad();
}

Linear::Linear(ParamRegistry& reg, const std::string& prefix, std::size_t in, std::size_t out,
               bool frozen, bool bias)
    : has_bias(bias) {
    w = reg.add(prefix + ".w", {in, out}, ParamRegistry::Init::FanInUniform, in, frozen);
    if (bias) b = reg.add(prefix + ".b", {out}, ParamRegistry::Init::Zeros, in, frozen);
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, w);
    return has_bias ? add_rowvec(y, b) : y;
}

Tensor Linear::forward_vec(const Tensor& x) const {
    Tensor y = forward(reshape(x, {1, x.dim(0)}));
    return reshape(y, {y.dim(1)});
}

LayerNorm::LayerNorm(ParamRegistry& reg, const std::string& prefix, std::size_t dim, bool frozen) {
    scale = reg.add(prefix + ".scale", {dim}, ParamRegistry::Init::Ones, dim, frozen);
    shift = reg.add(prefix + ".shift", {dim}, ParamRegistry::Init::Zeros, dim, frozen);
}

Tensor LayerNorm::forward(const Tensor& x) const {
    const double inv_d = 1.0 / static_cast<double>(x.dim(1));
    Tensor mu = mul_scalar(sum_axis(x, 1, true), inv_d);
    Tensor xc = add_colvec(x, neg(mu));
    Tensor var = mul_scalar(sum_axis(mul(xc, xc), 1, true), inv_d);
    Tensor inv_std = reciprocal(sqrt_elem(add_scalar(var, eps)));
    Tensor y = mul_colvec(xc, inv_std);
    return add_rowvec(mul_rowvec(y, scale), shift);
}

BatchNorm::BatchNorm(ParamRegistry& reg, const std::string& prefix, std::size_t dim) {
    scale = reg.add(prefix + ".scale", {dim}, ParamRegistry::Init::Ones, dim);
    shift = reg.add(prefix + ".shift", {dim}, ParamRegistry::Init::Zeros, dim);
    running_mean = &reg.add_buffer(prefix + ".running_mean", std::vector<double>(dim, 0.0));
    running_var = &reg.add_buffer(prefix + ".running_var", std::vector<double>(dim, 1.0));
}

Tensor BatchNorm::forward(const Tensor& x, const ForwardCtx& ctx) const {
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (ctx.training()) {
        const double inv_n = 1.0 / static_cast<double>(n);
        Tensor mu = mul_scalar(sum_axis(x, 0, false), inv_n);
        Tensor xc = add_rowvec(x, neg(mu));
        Tensor var = mul_scalar(sum_axis(mul(xc, xc), 0, false), inv_n);
        if (ctx.update_stats) {
            for (std::size_t j = 0; j < d; ++j) {
                (*running_mean)[j] += momentum * (mu.values()[j] - (*running_mean)[j]);
                (*running_var)[j] += momentum * (var.values()[j] - (*running_var)[j]);
            }
        }
        Tensor inv_std = reciprocal(sqrt_elem(add_scalar(var, eps)));
        Tensor y = mul_rowvec(xc, inv_std);
        return add_rowvec(mul_rowvec(y, scale), shift);
    }
    // eval: pure affine map of the running statistics
    std::vector<double> k(d), off(d);
    for (std::size_t j = 0; j < d; ++j) {
        k[j] = 1.0 / std::sqrt((*running_var)[j] + eps);
        off[j] = -(*running_mean)[j] * k[j];
    }
    Tensor y = add_rowvec(mul_rowvec(x, Tensor::from_data({d}, std::move(k))),
                          Tensor::from_data({d}, std::move(off)));
    return add_rowvec(mul_rowvec(y, scale), shift);
}

Tensor multi_head_self_attention(const Tensor& x, const Linear& qkv, const Linear& out,
                                 std::size_t heads) {
    const std::size_t d = x.dim(1);
    if (d % heads != 0) throw ShapeMismatch("attention heads must divide d_model");
    const std::size_t dh = d / heads;
    Tensor proj = qkv.forward(x);  // (N, 3d) laid out [Q|K|V]
    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = slice_cols(proj, h * dh, (h + 1) * dh);
        Tensor k = slice_cols(proj, d + h * dh, d + (h + 1) * dh);
        Tensor v = slice_cols(proj, 2 * d + h * dh, 2 * d + (h + 1) * dh);
        Tensor att = softmax(mul_scalar(matmul(q, transpose2d(k)), inv_scale), -1);
        head_outs.push_back(matmul(att, v));
    }
    return out.forward(concat_cols(head_outs));
}

TransformerEncoder::TransformerEncoder(ParamRegistry& reg, const std::string& prefix,
                                       std::size_t d_model, std::size_t depth, std::size_t heads)
    : heads(heads), d_model(d_model) {
    for (std::size_t l = 0; l < depth; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        TransformerLayer layer;
        layer.ln1 = LayerNorm(reg, lp + ".ln1", d_model);
        layer.qkv = Linear(reg, lp + ".qkv", d_model, 3 * d_model);
        layer.out = Linear(reg, lp + ".out", d_model, d_model);
        layer.ln2 = LayerNorm(reg, lp + ".ln2", d_model);
        layer.fc1 = Linear(reg, lp + ".fc1", d_model, 4 * d_model);
        layer.fc2 = Linear(reg, lp + ".fc2", 4 * d_model, d_model);
        layers.push_back(std::move(layer));
    }
    final_ln = LayerNorm(reg, prefix + ".final_ln", d_model);
}

Tensor TransformerEncoder::forward(const Tensor& x) const {
    Tensor h = x;
    for (const TransformerLayer& layer : layers) {
        h = add(h, multi_head_self_attention(layer.ln1.forward(h), layer.qkv, layer.out, heads));
        h = add(h, layer.fc2.forward(gelu(layer.fc1.forward(layer.ln2.forward(h)))));
    }
    return final_ln.forward(h);
}

}  // namespace lacovl
