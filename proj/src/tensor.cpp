#include "lacovl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace lacovl {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

std::vector<double>& ensure_grad(detail::TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    return t.grad;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}

void check_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeMismatch(std::string(op) + ": expected 2-D, got " + shape_str(t.shape()));
}

int normalize_axis(int axis, std::size_t rank) {
    int r = static_cast<int>(rank);
    if (axis < -r || axis >= r) throw InvalidAxis("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return axis < 0 ? axis + r : axis;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    return from_data(shape, std::vector<double>(numel(shape), value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size())
        throw ShapeMismatch("from_data: shape " + shape_str(shape) + " wants " +
                            std::to_string(numel(shape)) + " values, got " +
                            std::to_string(data.size()));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

double Tensor::value() const {
    if (size() != 1) throw NotScalar("tensor of shape " + shape_str(shape()) + " is not a scalar");
    return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
}

Tensor Tensor::detach() const {
    return Tensor::from_data(impl_->shape, impl_->data, false);
}

Tensor make_node(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                 std::function<void(detail::TensorImpl&)> backward_fn) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    if (g_grad_enabled && rg) {
        impl->requires_grad = true;
        impl->parents = std::move(parents);
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(impl));
}

void Tensor::backward() const {
    if (size() != 1) throw NotScalar("backward needs a scalar loss, got " + shape_str(shape()));
    if (!impl_->requires_grad) return;

    // Post-order DFS for a topological ordering.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> visited;
    struct Frame {
        detail::TensorImpl* node;
        std::size_t next_child;
    };
    std::vector<Frame> stack{{impl_.get(), 0}};
    visited.insert(impl_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            detail::TensorImpl* child = f.node->parents[f.next_child].impl();
            ++f.next_child;
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    ensure_grad(*impl_)[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

// ---- raw kernels ----

namespace kernels {

void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate) {
    // c[i,j] = sum_p a[i,p] * b[j,p]
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate) {
    // a is (m,k) interpreted transposed: c[(k),(n)] = sum_r a[r,i] * b[r,j]
    if (!accumulate) std::memset(c, 0, k * n * sizeof(double));
    for (std::size_t r = 0; r < m; ++r) {
        const double* arow = a + r * k;
        const double* brow = b + r * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace kernels

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    return make_node(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
        for (int side = 0; side < 2; ++side) {
            detail::TensorImpl* p = self.parents[side].impl();
            if (!p->requires_grad) continue;
            auto& g = ensure_grad(*p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return make_node(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
        detail::TensorImpl* pa = self.parents[0].impl();
        detail::TensorImpl* pb = self.parents[1].impl();
        if (pa->requires_grad) {
            auto& g = ensure_grad(*pa);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = ensure_grad(*pb);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_node(a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
        detail::TensorImpl* pa = self.parents[0].impl();
        detail::TensorImpl* pb = self.parents[1].impl();
        if (pa->requires_grad) {
            auto& g = ensure_grad(*pa);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            auto& g = ensure_grad(*pb);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
        }
    });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor add_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + c;
    return make_node(x.shape(), std::move(out), {x}, [](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor mul_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * c;
    return make_node(x.shape(), std::move(out), {x}, [c](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
    });
}

Tensor reciprocal(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / x.values()[i];
    return make_node(x.shape(), std::move(out), {x}, [](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = self.data[i];
            g[i] -= self.grad[i] * y * y;
        }
    });
}

Tensor sqrt_elem(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(x.values()[i]);
    return make_node(x.shape(), std::move(out), {x}, [](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = self.data[i];
            if (y > 0.0) g[i] += self.grad[i] * 0.5 / y;
        }
    });
}

namespace {
inline double gelu_cdf(double x) { return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
}  // namespace

Tensor activate(const Tensor& x, Activation kind) {
    std::vector<double> out(x.size());
    const double* px = x.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = px[i];
        switch (kind) {
            case Activation::Relu: out[i] = v > 0.0 ? v : 0.0; break;
            case Activation::ReluSquared: out[i] = v > 0.0 ? v * v : 0.0; break;
            case Activation::Sigmoid: out[i] = 1.0 / (1.0 + std::exp(-v)); break;
            case Activation::Tanh: out[i] = std::tanh(v); break;
            case Activation::Gelu: out[i] = v * gelu_cdf(v); break;
        }
    }
    return make_node(x.shape(), std::move(out), {x}, [kind](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double xv = p->data[i];
            const double yv = self.data[i];
            double d = 0.0;
            switch (kind) {
                case Activation::Relu: d = xv > 0.0 ? 1.0 : 0.0; break;
                case Activation::ReluSquared: d = xv > 0.0 ? 2.0 * xv : 0.0; break;
                case Activation::Sigmoid: d = yv * (1.0 - yv); break;
                case Activation::Tanh: d = 1.0 - yv * yv; break;
                case Activation::Gelu: d = gelu_cdf(xv) + xv * gelu_pdf(xv); break;
            }
            g[i] += self.grad[i] * d;
        }
    });
}

Tensor relu(const Tensor& x) { return activate(x, Activation::Relu); }
Tensor relu_squared(const Tensor& x) { return activate(x, Activation::ReluSquared); }
Tensor sigmoid(const Tensor& x) { return activate(x, Activation::Sigmoid); }
Tensor tanh_act(const Tensor& x) { return activate(x, Activation::Tanh); }
Tensor gelu(const Tensor& x) { return activate(x, Activation::Gelu); }

// ---- broadcast ----

namespace {
void check_rowvec(const Tensor& m, const Tensor& v, const char* op) {
    check_2d(m, op);
    if (!(v.rank() == 1 && v.dim(0) == m.dim(1)))
        throw ShapeMismatch(std::string(op) + ": " + shape_str(m.shape()) + " with row vector " +
                            shape_str(v.shape()));
}
void check_colvec(const Tensor& m, const Tensor& v, const char* op) {
    check_2d(m, op);
    const bool ok = (v.rank() == 1 && v.dim(0) == m.dim(0)) ||
                    (v.rank() == 2 && v.dim(0) == m.dim(0) && v.dim(1) == 1);
    if (!ok)
        throw ShapeMismatch(std::string(op) + ": " + shape_str(m.shape()) + " with column vector " +
                            shape_str(v.shape()));
}
}  // namespace

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    check_rowvec(m, v, "add_rowvec");
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.values()[i * c + j] + v.values()[j];
    return make_node(m.shape(), std::move(out), {m, v}, [r, c](detail::TensorImpl& self) {
        detail::TensorImpl* pm = self.parents[0].impl();
        detail::TensorImpl* pv = self.parents[1].impl();
        if (pm->requires_grad) {
            auto& g = ensure_grad(*pm);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pv->requires_grad) {
            auto& g = ensure_grad(*pv);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
        }
    });
}

Tensor mul_rowvec(const Tensor& m, const Tensor& v) {
    check_rowvec(m, v, "mul_rowvec");
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.values()[i * c + j] * v.values()[j];
    return make_node(m.shape(), std::move(out), {m, v}, [r, c](detail::TensorImpl& self) {
        detail::TensorImpl* pm = self.parents[0].impl();
        detail::TensorImpl* pv = self.parents[1].impl();
        if (pm->requires_grad) {
            auto& g = ensure_grad(*pm);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * pv->data[j];
        }
        if (pv->requires_grad) {
            auto& g = ensure_grad(*pv);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * pm->data[i * c + j];
        }
    });
}

Tensor add_colvec(const Tensor& m, const Tensor& v) {
    check_colvec(m, v, "add_colvec");
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.values()[i * c + j] + v.values()[i];
    return make_node(m.shape(), std::move(out), {m, v}, [r, c](detail::TensorImpl& self) {
        detail::TensorImpl* pm = self.parents[0].impl();
        detail::TensorImpl* pv = self.parents[1].impl();
        if (pm->requires_grad) {
            auto& g = ensure_grad(*pm);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pv->requires_grad) {
            auto& g = ensure_grad(*pv);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i] += self.grad[i * c + j];
        }
    });
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
    check_colvec(m, v, "mul_colvec");
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.values()[i * c + j] * v.values()[i];
    return make_node(m.shape(), std::move(out), {m, v}, [r, c](detail::TensorImpl& self) {
        detail::TensorImpl* pm = self.parents[0].impl();
        detail::TensorImpl* pv = self.parents[1].impl();
        if (pm->requires_grad) {
            auto& g = ensure_grad(*pm);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * pv->data[i];
        }
        if (pv->requires_grad) {
            auto& g = ensure_grad(*pv);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i] += self.grad[i * c + j] * pm->data[i * c + j];
        }
    });
}

Tensor broadcast_scalar(const Tensor& s, Shape shape) {
    if (s.size() != 1) throw NotScalar("broadcast_scalar needs a scalar source");
    std::vector<double> out(numel(shape), s.values()[0]);
    return make_node(std::move(shape), std::move(out), {s}, [](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        double acc = 0.0;
        for (double g : self.grad) acc += g;
        ensure_grad(*p)[0] += acc;
    });
}

// ---- reductions ----

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return make_node({}, {acc}, {x}, [](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (double& gi : g) gi += self.grad[0];
    });
}

Tensor mean_all(const Tensor& x) { return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Tensor sum_axis(const Tensor& m, int axis, bool keepdim) {
    check_2d(m, "sum_axis");
    const int ax = normalize_axis(axis, 2);
    const std::size_t r = m.dim(0), c = m.dim(1);
    if (ax == 0) {
        std::vector<double> out(c, 0.0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[j] += m.values()[i * c + j];
        Shape shape = keepdim ? Shape{1, c} : Shape{c};
        return make_node(std::move(shape), std::move(out), {m}, [r, c](detail::TensorImpl& self) {
            detail::TensorImpl* p = self.parents[0].impl();
            if (!p->requires_grad) return;
            auto& g = ensure_grad(*p);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j];
        });
    }
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += m.values()[i * c + j];
    Shape shape = keepdim ? Shape{r, 1} : Shape{r};
    return make_node(std::move(shape), std::move(out), {m}, [r, c](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i];
    });
}

namespace {
Tensor reduce_extreme(const Tensor& x, bool is_max) {
    const auto& v = x.values();
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (is_max ? v[i] > v[arg] : v[i] < v[arg]) arg = i;
    }
    return make_node({}, {v[arg]}, {x}, [arg](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        ensure_grad(*p)[arg] += self.grad[0];
    });
}
}  // namespace

Tensor reduce_max_all(const Tensor& x) { return reduce_extreme(x, true); }
Tensor reduce_min_all(const Tensor& x) { return reduce_extreme(x, false); }

// ---- shape ----

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
        throw ShapeMismatch("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    return make_node(std::move(shape), x.values(), {x}, [](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor transpose2d(const Tensor& m) {
    check_2d(m, "transpose2d");
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m.values()[i * c + j];
    return make_node({c, r}, std::move(out), {m}, [r, c](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    });
}

Tensor slice_rows(const Tensor& m, std::size_t r0, std::size_t r1) {
    check_2d(m, "slice_rows");
    if (r0 > r1 || r1 > m.dim(0))
        throw ShapeMismatch("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                            ") on " + shape_str(m.shape()));
    const std::size_t c = m.dim(1);
    std::vector<double> out(m.values().begin() + r0 * c, m.values().begin() + r1 * c);
    return make_node({r1 - r0, c}, std::move(out), {m}, [r0, c](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[r0 * c + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& m, std::size_t c0, std::size_t c1) {
    check_2d(m, "slice_cols");
    if (c0 > c1 || c1 > m.dim(1))
        throw ShapeMismatch("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                            ") on " + shape_str(m.shape()));
    const std::size_t r = m.dim(0), c = m.dim(1), w = c1 - c0;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = m.values()[i * c + c0 + j];
    return make_node({r, w}, std::move(out), {m}, [r, c, c0, w](detail::TensorImpl& self) {
        detail::TensorImpl* p = self.parents[0].impl();
        if (!p->requires_grad) return;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * c + c0 + j] += self.grad[i * w + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_rows: no parts");
    const std::size_t c = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
        check_2d(p, "concat_rows");
        if (p.dim(1) != c)
            throw ShapeMismatch("concat_rows: column mismatch " + shape_str(p.shape()));
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(rows * c);
    for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    std::vector<std::size_t> row_counts;
    for (const Tensor& p : parts) row_counts.push_back(p.dim(0));
    return make_node({rows, c}, std::move(out), parts,
                     [row_counts, c](detail::TensorImpl& self) {
                         std::size_t offset = 0;
                         for (std::size_t k = 0; k < self.parents.size(); ++k) {
                             detail::TensorImpl* p = self.parents[k].impl();
                             const std::size_t len = row_counts[k] * c;
                             if (p->requires_grad) {
                                 auto& g = ensure_grad(*p);
                                 for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
                             }
                             offset += len;
                         }
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: no parts");
    const std::size_t r = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
    std::size_t cols = 0;
    for (const Tensor& p : parts) {
        check_2d(p, "concat_cols");
        if (p.dim(0) != r) throw ShapeMismatch("concat_cols: row mismatch " + shape_str(p.shape()));
        cols += p.dim(1);
    }
    std::vector<double> out(r * cols);
    std::vector<std::size_t> widths;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * cols + off + j] = p.values()[i * w + j];
        widths.push_back(w);
        off += w;
    }
    return make_node({r, cols}, std::move(out), parts,
                     [r, cols, widths](detail::TensorImpl& self) {
                         std::size_t off = 0;
                         for (std::size_t k = 0; k < self.parents.size(); ++k) {
                             detail::TensorImpl* p = self.parents[k].impl();
                             const std::size_t w = widths[k];
                             if (p->requires_grad) {
                                 auto& g = ensure_grad(*p);
                                 for (std::size_t i = 0; i < r; ++i)
                                     for (std::size_t j = 0; j < w; ++j)
                                         g[i * w + j] += self.grad[i * cols + off + j];
                             }
                             off += w;
                         }
                     });
}

// ---- matmul ----

namespace {

struct BatchMap {
    Shape out_batch;
    std::vector<std::size_t> a_strides;  // per out-batch dim, in units of matrices
    std::vector<std::size_t> b_strides;
    std::size_t count = 1;

    std::size_t offset(std::size_t flat, const std::vector<std::size_t>& strides,
                       const std::vector<std::size_t>& extents) const {
        std::size_t off = 0;
        for (std::size_t d = extents.size(); d-- > 0;) {
            const std::size_t idx = flat % extents[d];
            flat /= extents[d];
            off += idx * strides[d];
        }
        return off;
    }
};

BatchMap make_batch_map(const Shape& a, const Shape& b) {
    const std::size_t ba = a.size() - 2, bb = b.size() - 2;
    const std::size_t nb = std::max(ba, bb);
    BatchMap m;
    m.out_batch.resize(nb);
    std::vector<std::size_t> ad(nb, 1), bd(nb, 1);
    for (std::size_t i = 0; i < ba; ++i) ad[nb - ba + i] = a[i];
    for (std::size_t i = 0; i < bb; ++i) bd[nb - bb + i] = b[i];
    for (std::size_t i = 0; i < nb; ++i) {
        if (ad[i] != bd[i] && ad[i] != 1 && bd[i] != 1)
            throw ShapeMismatch("matmul batch dims: " + shape_str(a) + " vs " + shape_str(b));
        m.out_batch[i] = std::max(ad[i], bd[i]);
        m.count *= m.out_batch[i];
    }
    // strides in matrix units, 0 where broadcast
    m.a_strides.assign(nb, 0);
    m.b_strides.assign(nb, 0);
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = nb; i-- > 0;) {
        m.a_strides[i] = (ad[i] == 1) ? 0 : sa;
        m.b_strides[i] = (bd[i] == 1) ? 0 : sb;
        sa *= ad[i];
        sb *= bd[i];
    }
    return m;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t M = a.dim(a.rank() - 2), K = a.dim(a.rank() - 1);
    const std::size_t K2 = b.dim(b.rank() - 2), N = b.dim(b.rank() - 1);
    if (K != K2)
        throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    BatchMap bm = make_batch_map(a.shape(), b.shape());

    Shape out_shape = bm.out_batch;
    out_shape.push_back(M);
    out_shape.push_back(N);
    std::vector<double> out(bm.count * M * N);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (std::size_t t = 0; t < bm.count; ++t) {
        const std::size_t ao = bm.offset(t, bm.a_strides, bm.out_batch) * M * K;
        const std::size_t bo = bm.offset(t, bm.b_strides, bm.out_batch) * K * N;
        kernels::mm_nn(pa + ao, pb + bo, out.data() + t * M * N, M, K, N, false);
    }
    return make_node(std::move(out_shape), std::move(out), {a, b},
                     [bm, M, K, N](detail::TensorImpl& self) {
                         detail::TensorImpl* pa = self.parents[0].impl();
                         detail::TensorImpl* pb = self.parents[1].impl();
                         for (std::size_t t = 0; t < bm.count; ++t) {
                             const std::size_t ao = bm.offset(t, bm.a_strides, bm.out_batch) * M * K;
                             const std::size_t bo = bm.offset(t, bm.b_strides, bm.out_batch) * K * N;
                             const double* gout = self.grad.data() + t * M * N;
                             if (pa->requires_grad) {
                                 auto& ga = ensure_grad(*pa);
                                 kernels::mm_nt(gout, pb->data.data() + bo, ga.data() + ao, M, N, K,
                                                true);
                             }
                             if (pb->requires_grad) {
                                 auto& gb = ensure_grad(*pb);
                                 kernels::mm_tn(pa->data.data() + ao, gout, gb.data() + bo, M, K, N,
                                                true);
                             }
                         }
                     });
}

Tensor matvec(const Tensor& m, const Tensor& v) {
    check_2d(m, "matvec");
    if (v.rank() != 1 || v.dim(0) != m.dim(1))
        throw ShapeMismatch("matvec: " + shape_str(m.shape()) + " x " + shape_str(v.shape()));
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += m.values()[i * c + j] * v.values()[j];
        out[i] = acc;
    }
    return make_node({r}, std::move(out), {m, v}, [r, c](detail::TensorImpl& self) {
        detail::TensorImpl* pm = self.parents[0].impl();
        detail::TensorImpl* pv = self.parents[1].impl();
        if (pm->requires_grad) {
            auto& g = ensure_grad(*pm);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i] * pv->data[j];
        }
        if (pv->requires_grad) {
            auto& g = ensure_grad(*pv);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i] * pm->data[i * c + j];
        }
    });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0))
        throw ShapeMismatch("dot: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.values()[i] * b.values()[i];
    return make_node({}, {acc}, {a, b}, [](detail::TensorImpl& self) {
        detail::TensorImpl* pa = self.parents[0].impl();
        detail::TensorImpl* pb = self.parents[1].impl();
        const double g0 = self.grad[0];
        if (pa->requires_grad) {
            auto& g = ensure_grad(*pa);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pb->data[i];
        }
        if (pb->requires_grad) {
            auto& g = ensure_grad(*pb);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pa->data[i];
        }
    });
}

// ---- softmax / cross-entropy ----

Tensor softmax(const Tensor& x, int axis) {
    const int ax = normalize_axis(axis, x.rank() == 0 ? 1 : x.rank());
    const Shape& s = x.shape();
    std::size_t inner = 1, outer = 1;
    const std::size_t count = x.rank() == 0 ? 1 : s[ax];
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (static_cast<int>(i) < ax) outer *= s[i];
        if (static_cast<int>(i) > ax) inner *= s[i];
    }
    std::vector<double> out(x.size());
    const double* px = x.values().data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * count * inner + in;
            double mx = px[base];
            for (std::size_t k = 1; k < count; ++k) mx = std::max(mx, px[base + k * inner]);
            double denom = 0.0;
            for (std::size_t k = 0; k < count; ++k) {
                const double e = std::exp(px[base + k * inner] - mx);
                out[base + k * inner] = e;
                denom += e;
            }
            for (std::size_t k = 0; k < count; ++k) out[base + k * inner] /= denom;
        }
    }
    return make_node(x.shape(), std::move(out), {x},
                     [outer, inner, count](detail::TensorImpl& self) {
                         detail::TensorImpl* p = self.parents[0].impl();
                         if (!p->requires_grad) return;
                         auto& g = ensure_grad(*p);
                         for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t in = 0; in < inner; ++in) {
                                 const std::size_t base = o * count * inner + in;
                                 double dotv = 0.0;
                                 for (std::size_t k = 0; k < count; ++k)
                                     dotv += self.grad[base + k * inner] * self.data[base + k * inner];
                                 for (std::size_t k = 0; k < count; ++k) {
                                     const std::size_t idx = base + k * inner;
                                     g[idx] += self.data[idx] * (self.grad[idx] - dotv);
                                 }
                             }
                         }
                     });
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<std::size_t>& labels) {
    Tensor rows = logits.rank() == 1 ? reshape(logits, {1, logits.dim(0)}) : logits;
    check_2d(rows, "cross_entropy_mean");
    const std::size_t B = rows.dim(0), C = rows.dim(1);
    if (labels.size() != B)
        throw ShapeMismatch("cross_entropy_mean: " + std::to_string(labels.size()) +
                            " labels for batch " + std::to_string(B));
    std::vector<double> probs(B * C);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] >= C) throw ShapeMismatch("cross_entropy_mean: label out of range");
        const double* row = rows.values().data() + b * C;
        double mx = row[0];
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            probs[b * C + j] = std::exp(row[j] - mx);
            denom += probs[b * C + j];
        }
        for (std::size_t j = 0; j < C; ++j) probs[b * C + j] /= denom;
        loss += (mx + std::log(denom)) - row[labels[b]];
    }
    loss /= static_cast<double>(B);
    return make_node({}, {loss}, {rows},
                     [probs, labels, B, C](detail::TensorImpl& self) {
                         detail::TensorImpl* p = self.parents[0].impl();
                         if (!p->requires_grad) return;
                         auto& g = ensure_grad(*p);
                         const double scale = self.grad[0] / static_cast<double>(B);
                         for (std::size_t b = 0; b < B; ++b) {
                             for (std::size_t j = 0; j < C; ++j)
                                 g[b * C + j] += scale * probs[b * C + j];
                             g[b * C + labels[b]] -= scale;
                         }
                     });
}

// ---- norms ----

namespace {
Tensor l2_normalize_impl(const Tensor& x, std::size_t rows, std::size_t cols) {
    std::vector<double> out(x.size());
    std::vector<double> norms(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = x.values()[i * cols + j];
            sq += v * v;
        }
        const double n = std::sqrt(sq);
        if (n < 1e-12)
            throw DegenerateNorm("l2 normalize: row " + std::to_string(i) + " has norm " +
                                 std::to_string(n));
        norms[i] = n;
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x.values()[i * cols + j] / n;
    }
    return make_node(x.shape(), std::move(out), {x},
                     [norms, rows, cols](detail::TensorImpl& self) {
                         detail::TensorImpl* p = self.parents[0].impl();
                         if (!p->requires_grad) return;
                         auto& g = ensure_grad(*p);
                         for (std::size_t i = 0; i < rows; ++i) {
                             double dotv = 0.0;
                             for (std::size_t j = 0; j < cols; ++j)
                                 dotv += self.grad[i * cols + j] * self.data[i * cols + j];
                             for (std::size_t j = 0; j < cols; ++j) {
                                 const std::size_t idx = i * cols + j;
                                 g[idx] += (self.grad[idx] - self.data[idx] * dotv) / norms[i];
                             }
                         }
                     });
}
}  // namespace

Tensor l2_normalize_rows(const Tensor& m) {
    check_2d(m, "l2_normalize_rows");
    return l2_normalize_impl(m, m.dim(0), m.dim(1));
}

Tensor l2_normalize_vec(const Tensor& v) {
    if (v.rank() != 1) throw ShapeMismatch("l2_normalize_vec: expected 1-D, got " + shape_str(v.shape()));
    return l2_normalize_impl(v, 1, v.dim(0));
}

Tensor pairwise_euclidean(const Tensor& a, const Tensor& b) {
    check_2d(a, "pairwise_euclidean");
    check_2d(b, "pairwise_euclidean");
    if (a.dim(1) != b.dim(1))
        throw ShapeMismatch("pairwise_euclidean: " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    const std::size_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
    std::vector<double> out(n * m);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    std::vector<double> sqa(n, 0.0), sqb(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) sqa[i] += pa[i * d + k] * pa[i * d + k];
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < d; ++k) sqb[j] += pb[j * d + k] * pb[j * d + k];
    kernels::mm_nt(pa, pb, out.data(), n, d, m, false);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double sq = sqa[i] + sqb[j] - 2.0 * out[i * m + j];
            out[i * m + j] = std::sqrt(std::max(sq, 0.0));
        }
    return make_node({n, m}, std::move(out), {a, b}, [n, m, d](detail::TensorImpl& self) {
        detail::TensorImpl* pa = self.parents[0].impl();
        detail::TensorImpl* pb = self.parents[1].impl();
        if (!pa->requires_grad && !pb->requires_grad) return;
        std::vector<double>* ga = pa->requires_grad ? &ensure_grad(*pa) : nullptr;
        std::vector<double>* gb = pb->requires_grad ? &ensure_grad(*pb) : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double dist = self.data[i * m + j];
                if (dist <= 0.0) continue;  // subgradient 0 at coincident rows
                const double s = self.grad[i * m + j] / dist;
                if (s == 0.0) continue;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = pa->data[i * d + k] - pb->data[j * d + k];
                    if (ga) (*ga)[i * d + k] += s * diff;
                    if (gb) (*gb)[j * d + k] -= s * diff;
                }
            }
        }
    });
}

}  // namespace lacovl
