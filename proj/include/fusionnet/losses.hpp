#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fusionnet/annotations.hpp"
#include "fusionnet/graph.hpp"
#include "fusionnet/tensor.hpp"

namespace fusionnet {

// Composite training objective
//   L_total = L_mse + lambda1*L_grad + lambda2*L_entropy + lambda3*L_roi
// over single-channel images in [0,1]. Every term is differentiable w.r.t.
// the fused image.

struct LossWeights {
    double lambda1 = 0.5; // gradient term
    double lambda2 = 0.1; // entropy term
    double lambda3 = 0.2; // ROI term
};

struct LossBreakdown {
    double mse = 0;
    double grad = 0;
    double entropy = 0;
    double roi = 0;
    double total = 0;

    // The weighted recombination; `total` always equals this at logging time.
    double weighted_total(const LossWeights& w) const {
        return mse + w.lambda1 * grad + w.lambda2 * entropy + w.lambda3 * roi;
    }
};

// Reference against which fused gradients are matched: the elementwise max of
// the IR and VIS_Y Sobel magnitudes, or the IR magnitude alone.
enum class GradTarget { max_ir_vis, ir };

inline GradTarget grad_target_from_string(const std::string& s) {
    if (s == "max") return GradTarget::max_ir_vis;
    if (s == "ir") return GradTarget::ir;
    throw config_error("unknown grad_target '" + s + "' (expected 'max' or 'ir')");
}

inline std::string to_string(GradTarget t) {
    return t == GradTarget::max_ir_vis ? "max" : "ir";
}

inline constexpr int64_t kDefaultEntropyBins = 64;

// ---- graph-level terms ----

template <typename T>
VarT<T> loss_mse(const VarT<T>& fused, const VarT<T>& ir) {
    require_same_shape(fused->value, ir->value, "loss_mse");
    return mean(square(sub(fused, ir)));
}

// sqrt(Gx^2 + Gy^2 + eps^2) with the standard 3x3 Sobel kernels; eps keeps the
// square root differentiable at flat regions. Borders replicate the edge pixel
// so a constant image responds with eps everywhere, including its boundary.
template <typename T>
VarT<T> sobel_magnitude(const VarT<T>& img, double eps = 1e-8) {
    static constexpr double kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static constexpr double kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    if (img->value.rank() != 3 || img->value.extent(0) != 1)
        throw shape_error("sobel_magnitude: expected [1,H,W], got " +
                          shape_to_string(img->value.shape()));
    const int64_t h = img->value.extent(1);
    const int64_t w = img->value.extent(2);
    const int64_t n = h * w;
    const T* in = img->value.data();
    auto sample = [&](int64_t y, int64_t x) {
        y = std::clamp<int64_t>(y, 0, h - 1);
        x = std::clamp<int64_t>(x, 0, w - 1);
        return static_cast<double>(in[y * w + x]);
    };

    std::vector<double> gx(static_cast<size_t>(n)), gy(static_cast<size_t>(n)),
        mag(static_cast<size_t>(n));
    TensorT<T> out({1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double sx = 0.0, sy = 0.0;
            for (int dy = 0; dy < 3; ++dy)
                for (int dx = 0; dx < 3; ++dx) {
                    const double v = sample(y + dy - 1, x + dx - 1);
                    sx += kSobelX[dy][dx] * v;
                    sy += kSobelY[dy][dx] * v;
                }
            const size_t i = static_cast<size_t>(y * w + x);
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = std::sqrt(sx * sx + sy * sy + eps * eps);
            out[static_cast<int64_t>(i)] = static_cast<T>(mag[i]);
        }

    auto backward = [gx = std::move(gx), gy = std::move(gy), mag = std::move(mag), h,
                     w](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const TensorT<T>& g = node.grad_buf();
        TensorT<T>& gp = p.grad_buf();
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y * w + x);
                const double scale = static_cast<double>(g[static_cast<int64_t>(i)]);
                if (scale == 0.0) continue;
                const double ax = scale * gx[i] / mag[i];
                const double ay = scale * gy[i] / mag[i];
                for (int dy = 0; dy < 3; ++dy)
                    for (int dx = 0; dx < 3; ++dx) {
                        const double coeff = ax * kSobelX[dy][dx] + ay * kSobelY[dy][dx];
                        if (coeff == 0.0) continue;
                        const int64_t yy = std::clamp<int64_t>(y + dy - 1, 0, h - 1);
                        const int64_t xx = std::clamp<int64_t>(x + dx - 1, 0, w - 1);
                        gp[yy * w + xx] += static_cast<T>(coeff);
                    }
            }
    };
    return make_op<T>(std::move(out), {img}, std::move(backward), "sobel_magnitude");
}

// mean((|grad fused| - target)^2); the target is constant w.r.t. optimization.
template <typename T>
VarT<T> loss_grad(const VarT<T>& fused, const VarT<T>& ir, const VarT<T>& vis_y,
                  GradTarget target = GradTarget::max_ir_vis) {
    require_same_shape(fused->value, ir->value, "loss_grad");
    require_same_shape(fused->value, vis_y->value, "loss_grad");
    auto fused_mag = sobel_magnitude(fused);
    auto target_mag = target == GradTarget::max_ir_vis
                          ? max_elem(sobel_magnitude(ir), sobel_magnitude(vis_y))
                          : sobel_magnitude(ir);
    return mean(square(sub(fused_mag, target_mag)));
}

namespace detail {

// Linear binning over [0,1]: pixel x lands at u = x*bins - 0.5 and splits its
// unit mass between bins floor(u) and floor(u)+1 with triangular weights; the
// edge bins absorb the tails. Bin probabilities are accumulated in double.
struct SoftHistogram {
    std::vector<double> p;
    std::vector<int32_t> bin_lo; // per pixel; -2 marks a clamped (zero-derivative) pixel
};

template <typename T>
SoftHistogram soft_histogram(const TensorT<T>& img, int64_t bins) {
    SoftHistogram h;
    h.p.assign(static_cast<size_t>(bins), 0.0);
    h.bin_lo.resize(static_cast<size_t>(img.numel()));
    const double n = static_cast<double>(img.numel());
    for (int64_t i = 0; i < img.numel(); ++i) {
        const double x = static_cast<double>(img[i]);
        if (!(x >= 0.0 && x <= 1.0))
            throw contract_error("loss_entropy: pixel value " + std::to_string(x) +
                                 " outside [0,1]");
        const double u = x * static_cast<double>(bins) - 0.5;
        if (u <= 0.0) {
            h.p[0] += 1.0 / n;
            h.bin_lo[static_cast<size_t>(i)] = -2;
        } else if (u >= static_cast<double>(bins - 1)) {
            h.p[static_cast<size_t>(bins - 1)] += 1.0 / n;
            h.bin_lo[static_cast<size_t>(i)] = -2;
        } else {
            const auto lo = static_cast<int64_t>(u);
            const double frac = u - static_cast<double>(lo);
            h.p[static_cast<size_t>(lo)] += (1.0 - frac) / n;
            h.p[static_cast<size_t>(lo + 1)] += frac / n;
            h.bin_lo[static_cast<size_t>(i)] = static_cast<int32_t>(lo);
        }
    }
    return h;
}

inline double soft_entropy_bits(const std::vector<double>& p) {
    double entropy = 0.0;
    for (double pb : p) entropy -= pb * std::log2(pb + 1e-12);
    return entropy;
}

} // namespace detail

// Negated soft-histogram entropy: minimizing this maximizes texture richness.
// Range [-log2(bins), ~0]; the value is 0 for an image concentrated in one bin
// and -log2(bins) for a uniform soft histogram.
template <typename T>
VarT<T> loss_entropy(const VarT<T>& fused, int64_t bins = kDefaultEntropyBins) {
    if (bins < 2) throw config_error("loss_entropy: bins must be >= 2");
    if (fused->value.numel() == 0) throw contract_error("loss_entropy: empty image");
    auto hist = detail::soft_histogram(fused->value, bins);
    const double loss = -detail::soft_entropy_bits(hist.p);
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(loss));

    const double n = static_cast<double>(fused->value.numel());
    auto backward = [hist = std::move(hist), bins, n](NodeT<T>& node) {
        auto& p = *node.parents[0];
        if (!p.requires_grad) return;
        const T g = node.grad_buf()[0];
        // d(loss)/d(p_b): loss = sum p_b*log2(p_b + 1e-12)
        std::vector<double> dldp(hist.p.size());
        constexpr double kLn2 = 0.6931471805599453;
        for (size_t b = 0; b < hist.p.size(); ++b)
            dldp[b] = std::log2(hist.p[b] + 1e-12) + hist.p[b] / ((hist.p[b] + 1e-12) * kLn2);
        TensorT<T>& gp = p.grad_buf();
        const double scale = static_cast<double>(bins) / n;
        for (int64_t i = 0; i < gp.numel(); ++i) {
            const int32_t lo = hist.bin_lo[static_cast<size_t>(i)];
            if (lo < 0) continue; // tail-clamped pixel: zero local derivative
            const double d = (dldp[static_cast<size_t>(lo + 1)] - dldp[static_cast<size_t>(lo)]) * scale;
            gp[i] += static_cast<T>(static_cast<double>(g) * d);
        }
    };
    return make_op<T>(std::move(out), {fused}, std::move(backward), "soft_entropy");
}

// 0/1 mask of the union of box pixels (each pixel counted once) clipped to
// [0,w) x [0,h), plus the union's pixel count.
template <typename T>
std::pair<TensorT<T>, int64_t> roi_mask(const AnnotationSet& boxes, int64_t h, int64_t w) {
    TensorT<T> mask({1, h, w});
    for (const auto& box : boxes.boxes) {
        const int64_t x0 = std::max<int64_t>(0, box.xmin);
        const int64_t x1 = std::min<int64_t>(w, box.xmax);
        const int64_t y0 = std::max<int64_t>(0, box.ymin);
        const int64_t y1 = std::min<int64_t>(h, box.ymax);
        for (int64_t y = y0; y < y1; ++y)
            for (int64_t x = x0; x < x1; ++x) mask.at(0, y, x) = T(1);
    }
    int64_t count = 0;
    for (int64_t i = 0; i < mask.numel(); ++i) count += mask[i] == T(1) ? 1 : 0;
    return {std::move(mask), count};
}

// Mean squared fused-vs-IR error over the union of ROI pixels; 0 when the
// union is empty so unannotated images still train.
template <typename T>
VarT<T> loss_roi(const VarT<T>& fused, const VarT<T>& ir, const AnnotationSet& boxes) {
    require_same_shape(fused->value, ir->value, "loss_roi");
    const int64_t h = fused->value.extent(fused->value.rank() - 2);
    const int64_t w = fused->value.extent(fused->value.rank() - 1);
    auto [mask, count] = roi_mask<T>(boxes, h, w);
    if (count == 0) return make_const(TensorT<T>::scalar(T(0)), "empty_roi");
    auto masked = mul(make_const(mask.reshaped(fused->value.shape()), "roi_mask"),
                      square(sub(fused, ir)));
    return mul_scalar(sum(masked), 1.0 / static_cast<double>(count));
}

template <typename T>
struct TotalLossT {
    VarT<T> total;
    LossBreakdown values;
};

template <typename T>
TotalLossT<T> loss_total(const VarT<T>& fused, const VarT<T>& ir, const VarT<T>& vis_y,
                         const AnnotationSet& boxes, const LossWeights& weights,
                         GradTarget target = GradTarget::max_ir_vis,
                         int64_t entropy_bins = kDefaultEntropyBins) {
    TotalLossT<T> out;
    auto mse = loss_mse(fused, ir);
    auto grad = loss_grad(fused, ir, vis_y, target);
    auto entropy = loss_entropy(fused, entropy_bins);
    auto roi = loss_roi(fused, ir, boxes);
    out.total = add(add(add(mse, mul_scalar(grad, weights.lambda1)),
                        mul_scalar(entropy, weights.lambda2)),
                    mul_scalar(roi, weights.lambda3));
    out.values.mse = static_cast<double>(mse->value[0]);
    out.values.grad = static_cast<double>(grad->value[0]);
    out.values.entropy = static_cast<double>(entropy->value[0]);
    out.values.roi = static_cast<double>(roi->value[0]);
    out.values.total = out.values.weighted_total(weights);
    return out;
}

// ---- plain-tensor conveniences ----

template <typename T>
double loss_mse(const TensorT<T>& fused, const TensorT<T>& ir) {
    return static_cast<double>(loss_mse(make_const(fused), make_const(ir))->value[0]);
}

template <typename T>
TensorT<T> sobel_magnitude(const TensorT<T>& img) {
    return sobel_magnitude(make_const(img))->value;
}

template <typename T>
double loss_grad(const TensorT<T>& fused, const TensorT<T>& ir, const TensorT<T>& vis_y,
                 GradTarget target = GradTarget::max_ir_vis) {
    return static_cast<double>(
        loss_grad(make_const(fused), make_const(ir), make_const(vis_y), target)->value[0]);
}

template <typename T>
double loss_entropy(const TensorT<T>& fused, int64_t bins = kDefaultEntropyBins) {
    return static_cast<double>(loss_entropy(make_const(fused), bins)->value[0]);
}

template <typename T>
double loss_roi(const TensorT<T>& fused, const TensorT<T>& ir, const AnnotationSet& boxes) {
    return static_cast<double>(loss_roi(make_const(fused), make_const(ir), boxes)->value[0]);
}

template <typename T>
LossBreakdown loss_total(const TensorT<T>& fused, const TensorT<T>& ir, const TensorT<T>& vis_y,
                         const AnnotationSet& boxes, const LossWeights& weights,
                         GradTarget target = GradTarget::max_ir_vis,
                         int64_t entropy_bins = kDefaultEntropyBins) {
    return loss_total(make_const(fused), make_const(ir), make_const(vis_y), boxes, weights,
                      target, entropy_bins)
        .values;
}

} // namespace fusionnet
