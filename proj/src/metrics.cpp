#include "fusionnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace fusionnet {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& gaussian_taps() {
    static const std::array<double, kWindow> taps = [] {
        std::array<double, kWindow> t{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - (kWindow - 1) / 2.0;
            t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += t[i];
        }
        for (double& v : t) v /= sum;
        return t;
    }();
    return taps;
}

void require_image(const Tensor& t, const char* op) {
    if (t.rank() != 3 || t.extent(0) != 1)
        throw shape_error(std::string(op) + ": expected [1,H,W], got " + shape_to_string(t.shape()));
}

// Separable valid-mode Gaussian filter of a H x W double plane.
std::vector<double> gauss_valid(const std::vector<double>& src, int64_t h, int64_t w) {
    const auto& taps = gaussian_taps();
    const int64_t out_w = w - kWindow + 1;
    const int64_t out_h = h - kWindow + 1;
    std::vector<double> horiz(static_cast<size_t>(h * out_w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int t = 0; t < kWindow; ++t) acc += taps[t] * src[y * w + x + t];
            horiz[y * out_w + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(out_h * out_w));
    for (int64_t y = 0; y < out_h; ++y)
        for (int64_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int t = 0; t < kWindow; ++t) acc += taps[t] * horiz[(y + t) * out_w + x];
            out[y * out_w + x] = acc;
        }
    return out;
}

double ssim_planes(const double* x, const double* y, int64_t h, int64_t w) {
    const int64_t n = h * w;
    std::vector<double> xv(x, x + n), yv(y, y + n);
    std::vector<double> xx(static_cast<size_t>(n)), yy(static_cast<size_t>(n)), xy(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mu_x = gauss_valid(xv, h, w);
    const auto mu_y = gauss_valid(yv, h, w);
    const auto m_xx = gauss_valid(xx, h, w);
    const auto m_yy = gauss_valid(yy, h, w);
    const auto m_xy = gauss_valid(xy, h, w);

    double acc = 0.0;
    for (size_t i = 0; i < mu_x.size(); ++i) {
        const double mx = mu_x[i];
        const double my = mu_y[i];
        const double var_x = m_xx[i] - mx * mx;
        const double var_y = m_yy[i] - my * my;
        const double cov = m_xy[i] - mx * my;
        const double num = (2.0 * mx * my + kC1) * (2.0 * cov + kC2);
        const double den = (mx * mx + my * my + kC1) * (var_x + var_y + kC2);
        acc += num / den;
    }
    return acc / static_cast<double>(mu_x.size());
}

} // namespace

double ssim(const Tensor& x, const Tensor& y) {
    require_image(x, "ssim");
    require_image(y, "ssim");
    require_same_shape(x, y, "ssim");
    const int64_t h = x.extent(1);
    const int64_t w = x.extent(2);
    if (h < kWindow || w < kWindow)
        throw contract_error("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                             " is smaller than the 11x11 window; crop-level scores use the "
                             "roi_ssim small-box policy instead");
    std::vector<double> xd(static_cast<size_t>(h * w)), yd(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h * w; ++i) {
        xd[i] = static_cast<double>(x[i]);
        yd[i] = static_cast<double>(y[i]);
    }
    return ssim_planes(xd.data(), yd.data(), h, w);
}

double mse_metric(const Tensor& x, const Tensor& y) {
    require_same_shape(x, y, "mse_metric");
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(x.numel());
}

double entropy_metric(const Tensor& x) {
    require_image(x, "entropy_metric");
    std::array<int64_t, 256> counts{};
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double v = std::min(static_cast<double>(x[i]), 1.0 - 1e-9);
        if (!(v >= 0.0))
            throw contract_error("entropy_metric: pixel value outside [0,1]");
        counts[static_cast<size_t>(v * 256.0)] += 1;
    }
    const double n = static_cast<double>(x.numel());
    double entropy = 0.0;
    for (int64_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        entropy -= p * std::log2(p);
    }
    return entropy;
}

RoiSsimResult roi_ssim(const Tensor& fused, const Tensor& ir, const AnnotationSet& boxes) {
    require_image(fused, "roi_ssim");
    require_same_shape(fused, ir, "roi_ssim");
    const int64_t h = fused.extent(1);
    const int64_t w = fused.extent(2);

    RoiSsimResult result;
    double acc = 0.0;
    for (const auto& raw : boxes.boxes) {
        BoundingBox box = raw;
        box.xmin = std::max<int64_t>(0, box.xmin);
        box.ymin = std::max<int64_t>(0, box.ymin);
        box.xmax = std::min<int64_t>(w, box.xmax);
        box.ymax = std::min<int64_t>(h, box.ymax);
        if (box.degenerate() || box.width() < kWindow || box.height() < kWindow) {
            result.skipped += 1;
            continue;
        }
        Tensor crop_f({1, box.height(), box.width()});
        Tensor crop_i({1, box.height(), box.width()});
        for (int64_t y = 0; y < box.height(); ++y)
            for (int64_t x = 0; x < box.width(); ++x) {
                crop_f.at(0, y, x) = fused.at(0, box.ymin + y, box.xmin + x);
                crop_i.at(0, y, x) = ir.at(0, box.ymin + y, box.xmin + x);
            }
        acc += ssim(crop_f, crop_i);
        result.evaluated += 1;
    }
    if (result.evaluated > 0) result.value = acc / static_cast<double>(result.evaluated);
    return result;
}

void MetricReport::compute_means() {
    mean_ssim = mean_mse = mean_entropy = 0;
    mean_roi_ssim.reset();
    if (rows.empty()) return;
    double roi_acc = 0.0;
    int64_t roi_n = 0;
    for (const auto& row : rows) {
        mean_ssim += row.ssim;
        mean_mse += row.mse;
        mean_entropy += row.entropy;
        if (row.roi_ssim) {
            roi_acc += *row.roi_ssim;
            roi_n += 1;
        }
    }
    const double n = static_cast<double>(rows.size());
    mean_ssim /= n;
    mean_mse /= n;
    mean_entropy /= n;
    if (roi_n > 0) mean_roi_ssim = roi_acc / static_cast<double>(roi_n);
}

} // namespace fusionnet
