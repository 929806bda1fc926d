#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusionnet/annotations.hpp"
#include "fusionnet/tensor.hpp"

namespace fusionnet {

// Evaluation-only image quality metrics (no gradients). Inputs are
// single-channel [1,H,W] tensors with values in [0,1].

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2,
// C2=(0.03)^2 at data range 1.0, averaged over valid (non-padded) window
// positions. Throws for images smaller than the window.
double ssim(const Tensor& x, const Tensor& y);

// Mean squared error, accumulated in double.
double mse_metric(const Tensor& x, const Tensor& y);

// Shannon entropy in bits over a hard 256-bin histogram; pixels quantize as
// floor(min(x, 1-1e-9) * 256).
double entropy_metric(const Tensor& x);

struct RoiSsimResult {
    std::optional<double> value; // absent when no box is at least 11x11
    int64_t evaluated = 0;
    int64_t skipped = 0; // boxes smaller than the SSIM window
};

// SSIM per box crop (after clipping to the image), averaged over boxes whose
// clipped sides are both >= 11.
RoiSsimResult roi_ssim(const Tensor& fused, const Tensor& ir, const AnnotationSet& boxes);

struct MetricRow {
    std::string id;
    double ssim = 0;
    double mse = 0;
    double entropy = 0;
    std::optional<double> roi_ssim;
    int64_t roi_boxes_skipped = 0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    double mean_ssim = 0;
    double mean_mse = 0;
    double mean_entropy = 0;
    std::optional<double> mean_roi_ssim; // over rows that have a value

    void compute_means();
};

} // namespace fusionnet
