#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

// Reverse-mode computation graph. Every op evaluates eagerly, records its
// parents and a local gradient rule, and validates that the produced values
// are finite. Graphs are DAGs confined to one thread.

template <typename T>
struct NodeT;

template <typename T>
using VarT = std::shared_ptr<NodeT<T>>;

template <typename T>
struct NodeT {
    TensorT<T> value;
    std::vector<VarT<T>> parents;
    std::function<void(NodeT<T>&)> backward_fn; // pulls this->grad into parent grads
    const char* op = "leaf";
    bool requires_grad = false;

    // Gradient buffer, allocated on demand with the value's shape.
    TensorT<T>& grad_buf() {
        if (grad_.numel() != value.numel()) grad_ = TensorT<T>(value.shape());
        return grad_;
    }
    const TensorT<T>& grad() {
        return grad_buf();
    }

private:
    TensorT<T> grad_;
};

// Leaf parameter: participates in gradient accumulation.
template <typename T>
VarT<T> make_leaf(TensorT<T> value, const char* name = "leaf") {
    auto node = std::make_shared<NodeT<T>>();
    node->value = std::move(value);
    node->value.check_finite(name);
    node->op = name;
    node->requires_grad = true;
    return node;
}

// Constant input: no gradient flows into it.
template <typename T>
VarT<T> make_const(TensorT<T> value, const char* name = "const") {
    auto node = std::make_shared<NodeT<T>>();
    node->value = std::move(value);
    node->value.check_finite(name);
    node->op = name;
    node->requires_grad = false;
    return node;
}

// Generic op-node builder; also the extension point for custom ops with
// hand-derived gradient rules (see losses).
template <typename T>
VarT<T> make_op(TensorT<T> value, std::vector<VarT<T>> parents,
                std::function<void(NodeT<T>&)> backward_fn, const char* op) {
    auto node = std::make_shared<NodeT<T>>();
    node->value = std::move(value);
    node->value.check_finite(op);
    node->op = op;
    for (const auto& p : parents)
        if (p->requires_grad) node->requires_grad = true;
    node->parents = std::move(parents);
    if (node->requires_grad) node->backward_fn = std::move(backward_fn);
    return node;
}

namespace detail {

// ---- raw conv kernels (cross-correlation, stride 1, zero padding) ----

template <typename T>
void conv2d_forward_kernel(const T* in, int64_t n_batch, int64_t c_in, int64_t h, int64_t w,
                           const T* weight, int64_t c_out, int64_t k, int64_t pad,
                           const T* bias, T* out) {
    const int64_t hw = h * w;
    for (int64_t n = 0; n < n_batch; ++n) {
        const T* in_n = in + n * c_in * hw;
        T* out_n = out + n * c_out * hw;
        for (int64_t co = 0; co < c_out; ++co) {
            T* out_c = out_n + co * hw;
            const T bias_v = bias ? bias[co] : T(0);
            for (int64_t i = 0; i < hw; ++i) out_c[i] = bias_v;
            const T* w_co = weight + co * c_in * k * k;
            for (int64_t ci = 0; ci < c_in; ++ci) {
                const T* in_c = in_n + ci * hw;
                const T* w_cc = w_co + ci * k * k;
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t dy = ky - pad;
                    const int64_t y0 = std::max<int64_t>(0, -dy);
                    const int64_t y1 = std::min<int64_t>(h, h - dy);
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const T wv = w_cc[ky * k + kx];
                        const int64_t dx = kx - pad;
                        const int64_t x0 = std::max<int64_t>(0, -dx);
                        const int64_t x1 = std::min<int64_t>(w, w - dx);
                        for (int64_t y = y0; y < y1; ++y) {
                            T* out_row = out_c + y * w;
                            const T* in_row = in_c + (y + dy) * w + dx;
                            for (int64_t x = x0; x < x1; ++x) out_row[x] += wv * in_row[x];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input_kernel(const T* grad_out, int64_t n_batch, int64_t c_in, int64_t h,
                                  int64_t w, const T* weight, int64_t c_out, int64_t k,
                                  int64_t pad, T* grad_in) {
    const int64_t hw = h * w;
    for (int64_t n = 0; n < n_batch; ++n) {
        const T* g_n = grad_out + n * c_out * hw;
        T* gi_n = grad_in + n * c_in * hw;
        for (int64_t co = 0; co < c_out; ++co) {
            const T* g_c = g_n + co * hw;
            const T* w_co = weight + co * c_in * k * k;
            for (int64_t ci = 0; ci < c_in; ++ci) {
                T* gi_c = gi_n + ci * hw;
                const T* w_cc = w_co + ci * k * k;
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t dy = ky - pad;
                    const int64_t y0 = std::max<int64_t>(0, -dy);
                    const int64_t y1 = std::min<int64_t>(h, h - dy);
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const T wv = w_cc[ky * k + kx];
                        const int64_t dx = kx - pad;
                        const int64_t x0 = std::max<int64_t>(0, -dx);
                        const int64_t x1 = std::min<int64_t>(w, w - dx);
                        // out(y,x) consumed in(y+dy, x+dx): route grads back along the
                        // same shift.
                        for (int64_t y = y0; y < y1; ++y) {
                            const T* g_row = g_c + y * w;
                            T* gi_row = gi_c + (y + dy) * w + dx;
                            for (int64_t x = x0; x < x1; ++x) gi_row[x] += wv * g_row[x];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weight_kernel(const T* grad_out, const T* in, int64_t n_batch, int64_t c_in,
                                   int64_t h, int64_t w, int64_t c_out, int64_t k, int64_t pad,
                                   T* grad_weight) {
    const int64_t hw = h * w;
    for (int64_t n = 0; n < n_batch; ++n) {
        const T* g_n = grad_out + n * c_out * hw;
        const T* in_n = in + n * c_in * hw;
        for (int64_t co = 0; co < c_out; ++co) {
            const T* g_c = g_n + co * hw;
            T* gw_co = grad_weight + co * c_in * k * k;
            for (int64_t ci = 0; ci < c_in; ++ci) {
                const T* in_c = in_n + ci * hw;
                T* gw_cc = gw_co + ci * k * k;
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t dy = ky - pad;
                    const int64_t y0 = std::max<int64_t>(0, -dy);
                    const int64_t y1 = std::min<int64_t>(h, h - dy);
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t dx = kx - pad;
                        const int64_t x0 = std::max<int64_t>(0, -dx);
                        const int64_t x1 = std::min<int64_t>(w, w - dx);
                        // fixed-width lane accumulators: keeps the reduction
                        // order deterministic while the lanes vectorize
                        T lanes[8] = {};
                        T tail = 0;
                        for (int64_t y = y0; y < y1; ++y) {
                            const T* g_row = g_c + y * w;
                            const T* in_row = in_c + (y + dy) * w + dx;
                            int64_t x = x0;
                            for (; x + 8 <= x1; x += 8)
                                for (int64_t j = 0; j < 8; ++j)
                                    lanes[j] += g_row[x + j] * in_row[x + j];
                            for (; x < x1; ++x) tail += g_row[x] * in_row[x];
                        }
                        T acc = tail;
                        for (int64_t j = 0; j < 8; ++j) acc += lanes[j];
                        gw_cc[ky * k + kx] += acc;
                    }
                }
            }
        }
    }
}

// Interprets rank-3 tensors as batch of one; returns {N, C, H, W}.
inline std::array<int64_t, 4> as_nchw(const Shape& s, const char* op) {
    if (s.size() == 3) return {1, s[0], s[1], s[2]};
    if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
    throw shape_error(std::string(op) + ": expected rank 3 or 4 input, got " + shape_to_string(s));
}

} // namespace detail

// ---- graph ops ----

// Spatial-size-preserving convolution: odd k, stride 1, zero padding (k-1)/2.
template <typename T>
VarT<T> conv2d(const VarT<T>& input, const VarT<T>& weight, const VarT<T>& bias, int64_t padding) {
    const auto [n, c_in, h, w] = detail::as_nchw(input->value.shape(), "conv2d");
    const Shape& ws = weight->value.shape();
    if (ws.size() != 4 || ws[2] != ws[3])
        throw shape_error("conv2d: weight must be [Cout,Cin,k,k], got " + shape_to_string(ws));
    const int64_t c_out = ws[0];
    const int64_t k = ws[2];
    if (k % 2 == 0) throw shape_error("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (padding != (k - 1) / 2)
        throw shape_error("conv2d: padding must be (k-1)/2 = " + std::to_string((k - 1) / 2) +
                          ", got " + std::to_string(padding));
    if (ws[1] != c_in)
        throw shape_error("conv2d: input has " + std::to_string(c_in) + " channels but weight expects " +
                          std::to_string(ws[1]));
    if (bias->value.numel() != c_out)
        throw shape_error("conv2d: bias length " + std::to_string(bias->value.numel()) +
                          " != Cout " + std::to_string(c_out));

    Shape out_shape = input->value.shape();
    out_shape[out_shape.size() - 3] = c_out;
    TensorT<T> out(out_shape);
    detail::conv2d_forward_kernel(input->value.data(), n, c_in, h, w, weight->value.data(), c_out,
                                  k, padding, bias->value.data(), out.data());

    auto backward = [n = n, c_in = c_in, h = h, w = w, c_out = c_out, k = k,
                     padding](NodeT<T>& node) {
        const TensorT<T>& g = node.grad_buf();
        auto& in_node = *node.parents[0];
        auto& w_node = *node.parents[1];
        auto& b_node = *node.parents[2];
        if (in_node.requires_grad)
            detail::conv2d_backward_input_kernel(g.data(), n, c_in, h, w, w_node.value.data(),
                                                 c_out, k, padding, in_node.grad_buf().data());
        if (w_node.requires_grad)
            detail::conv2d_backward_weight_kernel(g.data(), in_node.value.data(), n, c_in, h, w,
                                                  c_out, k, padding, w_node.grad_buf().data());
        if (b_node.requires_grad) {
            TensorT<T>& gb = b_node.grad_buf();
            const int64_t hw = h * w;
            for (int64_t nn = 0; nn < n; ++nn)
                for (int64_t co = 0; co < c_out; ++co) {
                    const T* g_c = g.data() + (nn * c_out + co) * hw;
                    T acc = 0;
                    for (int64_t i = 0; i < hw; ++i) acc += g_c[i];
                    gb[co] += acc;
                }
        }
    };
    return make_op<T>(std::move(out), {input, weight, bias}, std::move(backward), "conv2d");
}

template <typename T>
VarT<T> relu(const VarT<T>& x) {
    TensorT<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    auto backward = [](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const TensorT<T>& g = node.grad_buf();
        TensorT<T>& gp = p.grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (p.value[i] > T(0)) gp[i] += g[i];
    };
    return make_op<T>(std::move(out), {x}, std::move(backward), "relu");
}

template <typename T>
VarT<T> sigmoid(const VarT<T>& x) {
    // Clamped one ulp inside (0,1): the blend downstream relies on strict
    // interior values even where the exact sigmoid would round to 0 or 1.
    const T lo = std::numeric_limits<T>::min();
    const T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
    TensorT<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double v = static_cast<double>(x->value[i]);
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        out[i] = std::clamp(static_cast<T>(s), lo, hi);
    }
    auto backward = [](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const TensorT<T>& g = node.grad_buf();
        TensorT<T>& gp = p.grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) {
            const T s = node.value[i];
            gp[i] += g[i] * s * (T(1) - s);
        }
    };
    return make_op<T>(std::move(out), {x}, std::move(backward), "sigmoid");
}

enum class Activation { relu, sigmoid };

template <typename T>
VarT<T> activation(const VarT<T>& x, Activation kind) {
    return kind == Activation::relu ? relu(x) : sigmoid(x);
}

enum class Elementwise { add, sub, mul };

// Same-shape elementwise op; a scalar (numel 1) may pair with a tensor on
// either side, which is the only broadcasting supported.
template <typename T>
VarT<T> elementwise(const VarT<T>& a, const VarT<T>& b, Elementwise kind) {
    const bool a_scalar = a->value.numel() == 1 && !a->value.same_shape(b->value);
    const bool b_scalar = b->value.numel() == 1 && !b->value.same_shape(a->value);
    if (!a_scalar && !b_scalar) require_same_shape(a->value, b->value, "elementwise");

    const TensorT<T>& big = a_scalar ? b->value : a->value;
    TensorT<T> out(big.shape());
    const int64_t count = out.numel();
    for (int64_t i = 0; i < count; ++i) {
        const T av = a_scalar ? a->value[0] : a->value[i];
        const T bv = b_scalar ? b->value[0] : b->value[i];
        out[i] = kind == Elementwise::add ? av + bv : kind == Elementwise::sub ? av - bv : av * bv;
    }

    auto backward = [kind, a_scalar, b_scalar](NodeT<T>& node) {
        const TensorT<T>& g = node.grad_buf();
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const int64_t count = g.numel();
        if (pa.requires_grad) {
            TensorT<T>& ga = pa.grad_buf();
            for (int64_t i = 0; i < count; ++i) {
                const T bv = b_scalar ? pb.value[0] : pb.value[i];
                const T contrib = kind == Elementwise::mul ? g[i] * bv : g[i];
                ga[a_scalar ? 0 : i] += contrib;
            }
        }
        if (pb.requires_grad) {
            TensorT<T>& gb = pb.grad_buf();
            for (int64_t i = 0; i < count; ++i) {
                const T av = a_scalar ? pa.value[0] : pa.value[i];
                T contrib = kind == Elementwise::mul ? g[i] * av : g[i];
                if (kind == Elementwise::sub) contrib = -contrib;
                gb[b_scalar ? 0 : i] += contrib;
            }
        }
    };
    const char* name = kind == Elementwise::add ? "add" : kind == Elementwise::sub ? "sub" : "mul";
    return make_op<T>(std::move(out), {a, b}, std::move(backward), name);
}

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) { return elementwise(a, b, Elementwise::add); }
template <typename T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) { return elementwise(a, b, Elementwise::sub); }
template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) { return elementwise(a, b, Elementwise::mul); }

template <typename T>
VarT<T> add_scalar(const VarT<T>& x, double c) {
    TensorT<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(x->value[i] + c);
    auto backward = [](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const TensorT<T>& g = node.grad_buf();
        TensorT<T>& gp = p.grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) gp[i] += g[i];
    };
    return make_op<T>(std::move(out), {x}, std::move(backward), "add_scalar");
}

template <typename T>
VarT<T> mul_scalar(const VarT<T>& x, double c) {
    TensorT<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(x->value[i] * c);
    auto backward = [c](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const TensorT<T>& g = node.grad_buf();
        TensorT<T>& gp = p.grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) gp[i] += static_cast<T>(g[i] * c);
    };
    return make_op<T>(std::move(out), {x}, std::move(backward), "mul_scalar");
}

template <typename T>
VarT<T> square(const VarT<T>& x) {
    TensorT<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * x->value[i];
    auto backward = [](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const TensorT<T>& g = node.grad_buf();
        TensorT<T>& gp = p.grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) gp[i] += T(2) * p.value[i] * g[i];
    };
    return make_op<T>(std::move(out), {x}, std::move(backward), "square");
}

template <typename T>
VarT<T> sqrt_elem(const VarT<T>& x) {
    TensorT<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(x->value[i]);
    auto backward = [](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const TensorT<T>& g = node.grad_buf();
        TensorT<T>& gp = p.grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) gp[i] += g[i] / (T(2) * node.value[i]);
    };
    return make_op<T>(std::move(out), {x}, std::move(backward), "sqrt");
}

// Elementwise max; ties route the gradient to the first argument.
template <typename T>
VarT<T> max_elem(const VarT<T>& a, const VarT<T>& b) {
    require_same_shape(a->value, b->value, "max_elem");
    TensorT<T> out(a->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(a->value[i], b->value[i]);
    auto backward = [](NodeT<T>& node) {
        const TensorT<T>& g = node.grad_buf();
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (pa.value[i] >= pb.value[i]) {
                if (pa.requires_grad) pa.grad_buf()[i] += g[i];
            } else if (pb.requires_grad) {
                pb.grad_buf()[i] += g[i];
            }
        }
    };
    return make_op<T>(std::move(out), {a, b}, std::move(backward), "max_elem");
}

enum class Reduce { sum, mean };

// Full reduction to a scalar; accumulates in double regardless of T.
template <typename T>
VarT<T> reduce(const VarT<T>& x, Reduce kind) {
    double acc = 0.0;
    for (int64_t i = 0; i < x->value.numel(); ++i) acc += static_cast<double>(x->value[i]);
    const int64_t count = x->value.numel();
    if (kind == Reduce::mean) acc /= static_cast<double>(count);
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc));
    auto backward = [kind, count](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const T g = node.grad_buf()[0];
        const T per = kind == Reduce::mean ? static_cast<T>(static_cast<double>(g) / count) : g;
        TensorT<T>& gp = p.grad_buf();
        for (int64_t i = 0; i < gp.numel(); ++i) gp[i] += per;
    };
    return make_op<T>(std::move(out), {x}, std::move(backward), kind == Reduce::sum ? "sum" : "mean");
}

template <typename T>
VarT<T> sum(const VarT<T>& x) { return reduce(x, Reduce::sum); }
template <typename T>
VarT<T> mean(const VarT<T>& x) { return reduce(x, Reduce::mean); }

// Concatenation along the channel axis of [C,H,W] or [N,C,H,W] tensors;
// a's channels precede b's, gradients split back the same way.
template <typename T>
VarT<T> concat_channels(const VarT<T>& a, const VarT<T>& b) {
    const auto [na, ca, ha, wa] = detail::as_nchw(a->value.shape(), "concat_channels");
    const auto [nb, cb, hb, wb] = detail::as_nchw(b->value.shape(), "concat_channels");
    if (a->value.rank() != b->value.rank() || na != nb || ha != hb || wa != wb)
        throw shape_error("concat_channels: incompatible shapes " + shape_to_string(a->value.shape()) +
                          " vs " + shape_to_string(b->value.shape()));
    Shape out_shape = a->value.shape();
    out_shape[out_shape.size() - 3] = ca + cb;
    TensorT<T> out(out_shape);
    const int64_t hw = ha * wa;
    for (int64_t n = 0; n < na; ++n) {
        T* dst = out.data() + n * (ca + cb) * hw;
        std::copy_n(a->value.data() + n * ca * hw, ca * hw, dst);
        std::copy_n(b->value.data() + n * cb * hw, cb * hw, dst + ca * hw);
    }
    auto backward = [na = na, ca = ca, cb = cb, hw](NodeT<T>& node) {
        const TensorT<T>& g = node.grad_buf();
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        for (int64_t n = 0; n < na; ++n) {
            const T* src = g.data() + n * (ca + cb) * hw;
            if (pa.requires_grad) {
                T* ga = pa.grad_buf().data() + n * ca * hw;
                for (int64_t i = 0; i < ca * hw; ++i) ga[i] += src[i];
            }
            if (pb.requires_grad) {
                T* gb = pb.grad_buf().data() + n * cb * hw;
                for (int64_t i = 0; i < cb * hw; ++i) gb[i] += src[ca * hw + i];
            }
        }
    };
    return make_op<T>(std::move(out), {a, b}, std::move(backward), "concat_channels");
}

// weight*a + (1-weight)*b, evaluated per element in double and rounded once,
// so the result never escapes [min(a,b), max(a,b)] in T precision.
template <typename T>
VarT<T> convex_blend(const VarT<T>& weight, const VarT<T>& a, const VarT<T>& b) {
    require_same_shape(weight->value, a->value, "convex_blend");
    require_same_shape(a->value, b->value, "convex_blend");
    TensorT<T> out(a->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double wv = static_cast<double>(weight->value[i]);
        out[i] = static_cast<T>(wv * static_cast<double>(a->value[i]) +
                                (1.0 - wv) * static_cast<double>(b->value[i]));
    }
    auto backward = [](NodeT<T>& node) {
        const TensorT<T>& g = node.grad_buf();
        auto& pw = *node.parents[0];
        auto& pa = *node.parents[1];
        auto& pb = *node.parents[2];
        for (int64_t i = 0; i < g.numel(); ++i) {
            const T wv = pw.value[i];
            if (pw.requires_grad) pw.grad_buf()[i] += g[i] * (pa.value[i] - pb.value[i]);
            if (pa.requires_grad) pa.grad_buf()[i] += g[i] * wv;
            if (pb.requires_grad) pb.grad_buf()[i] += g[i] * (T(1) - wv);
        }
    };
    return make_op<T>(std::move(out), {weight, a, b}, std::move(backward), "convex_blend");
}

// Reverse accumulation from a scalar root. Gradients of every node reachable
// through requires_grad paths are reset first, so repeated calls on the same
// graph are bit-identical. Leaves not reachable from the root keep (or get)
// zero gradients.
template <typename T>
void backward(const VarT<T>& root) {
    if (root->value.numel() != 1)
        throw contract_error("backward: root must be scalar, got shape " +
                             shape_to_string(root->value.shape()));

    // Post-order DFS over the requires_grad subgraph; parents precede children,
    // and visiting order is fixed by the recorded parent order.
    std::vector<NodeT<T>*> topo;
    if (root->requires_grad) {
        std::unordered_set<const NodeT<T>*> visited;
        std::vector<std::pair<NodeT<T>*, size_t>> stack;
        visited.insert(root.get());
        stack.emplace_back(root.get(), 0);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                NodeT<T>* parent = node->parents[next++].get();
                if (parent->requires_grad && !visited.count(parent)) {
                    visited.insert(parent);
                    stack.emplace_back(parent, 0);
                }
            } else {
                topo.push_back(node);
                stack.pop_back();
            }
        }
    }

    for (NodeT<T>* node : topo) node->grad_buf().fill(T(0));
    root->grad_buf().fill(T(1));

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        NodeT<T>* node = *it;
        node->grad_buf().check_finite(node->op);
        if (node->backward_fn) node->backward_fn(*node);
    }
}

} // namespace fusionnet
