#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lacovl/common.hpp"

namespace lacovl {

class Tensor;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated on first accumulation
    bool requires_grad = false;

    // Reverse-mode graph. Interior nodes keep handles to their inputs and a
    // closure that scatters this node's grad into them. Leaves have neither.
    std::vector<Tensor> parents;
    std::function<void(TensorImpl&)> backward_fn;
};

}  // namespace detail

// Dense row-major tensor of doubles with an optional reverse-mode graph node.
// Value-semantics handle: copies share the underlying buffer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

    const std::vector<double>& values() const { return impl_->data; }
    std::vector<double>& values() { return impl_->data; }
    double value() const;  // scalar access, throws NotScalar otherwise
    double at(std::size_t flat) const { return impl_->data[flat]; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg);

    // Gradient buffer; empty vector until backward has touched this tensor.
    const std::vector<double>& grad() const { return impl_->grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad() { impl_->grad.clear(); }

    // Run reverse-mode accumulation from this scalar. Grads add up across
    // calls until zero_grad is invoked on the leaves.
    void backward() const;

    // Leaf copy of the current values, detached from any graph.
    Tensor detach() const;

    detail::TensorImpl* impl() const { return impl_.get(); }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

    friend Tensor make_node(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                            std::function<void(detail::TensorImpl&)> backward_fn);
};

// Scoped switch that disables graph construction (pure evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor reciprocal(const Tensor& x);
Tensor sqrt_elem(const Tensor& x);  // derivative taken as 0 at exactly 0

enum class Activation { Relu, ReluSquared, Sigmoid, Tanh, Gelu };
Tensor activate(const Tensor& x, Activation kind);
Tensor relu(const Tensor& x);
Tensor relu_squared(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor gelu(const Tensor& x);

// ---- broadcast combinations (2-D matrix with a vector) ----
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // v added to every row
Tensor mul_rowvec(const Tensor& m, const Tensor& v);
Tensor add_colvec(const Tensor& m, const Tensor& v);  // v: (rows,) or (rows,1)
Tensor mul_colvec(const Tensor& m, const Tensor& v);
Tensor broadcast_scalar(const Tensor& s, Shape shape);

// ---- reductions ----
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_axis(const Tensor& m, int axis, bool keepdim);  // 2-D only
Tensor reduce_max_all(const Tensor& x);  // subgradient routed to first argmax
Tensor reduce_min_all(const Tensor& x);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose2d(const Tensor& m);
Tensor slice_rows(const Tensor& m, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& m, std::size_t c0, std::size_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// ---- linear algebra ----
// Batched matmul: [..,m,k] x [..,k,n] -> [..,m,n]; leading batch extents
// broadcast when equal or 1.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matvec(const Tensor& m, const Tensor& v);  // (r,c) x (c,) -> (r,)
Tensor dot(const Tensor& a, const Tensor& b);     // (n,) . (n,) -> scalar

// ---- softmax & loss ----
Tensor softmax(const Tensor& x, int axis);
// Mean softmax cross-entropy over rows of (B,C) logits (or a single (C,) row).
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<std::size_t>& labels);

// ---- norms ----
// Each row scaled to unit Euclidean norm; throws DegenerateNorm below 1e-12.
Tensor l2_normalize_rows(const Tensor& m);
Tensor l2_normalize_vec(const Tensor& v);

// Euclidean distance matrix between rows of a (n,d) and rows of b (n2,d),
// via the expansion |a|^2+|b|^2-2ab with clamp-at-zero before the sqrt.
Tensor pairwise_euclidean(const Tensor& a, const Tensor& b);

Tensor make_node(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                 std::function<void(detail::TensorImpl&)> backward_fn);

// Raw row-major kernels shared by forward and backward paths.
namespace kernels {
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate);
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate);
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate);
}  // namespace kernels

}  // namespace lacovl
