#pragma once

// Central finite-difference oracle for reverse-mode gradients. Independent of
// the graph's backward pass: it only re-evaluates forward values at perturbed
// leaf tensors.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "fusionnet/graph.hpp"
#include "fusionnet/rng.hpp"
#include "fusionnet/tensor.hpp"

namespace gradcheck {

template <typename T>
using GraphBuilder = std::function<fusionnet::VarT<T>(const std::vector<fusionnet::VarT<T>>&)>;

struct Options {
    double step = 1e-2;          // FD half-step; ~1e-2 for float, ~1e-5 for double
    int64_t samples_per_leaf = 0; // 0 = every coordinate
    uint64_t seed = 7;
    // Denominator floor as a fraction of the largest analytic gradient: keeps
    // near-zero entries from turning FD noise into spurious relative error.
    double floor_fraction = 0.05;
};

struct Report {
    double max_rel_err = 0.0;
    int64_t coords_checked = 0;
};

template <typename T>
double eval_scalar(const GraphBuilder<T>& build, const std::vector<fusionnet::TensorT<T>>& values) {
    std::vector<fusionnet::VarT<T>> leaves;
    leaves.reserve(values.size());
    for (const auto& v : values) leaves.push_back(fusionnet::make_leaf(v));
    return static_cast<double>(build(leaves)->value[0]);
}

// Hybrid check for the 32-bit build: analytic gradients come from the float
// graph, the finite-difference oracle runs on the float64 twin of the same
// graph at the same (exactly representable) point. Per-coordinate float32
// finite differences are dominated by forward rounding noise at any usable
// step size, so the oracle side always runs in the 64-bit mode.
inline Report check_f32_against_f64(const GraphBuilder<float>& build32,
                                    const GraphBuilder<double>& build64,
                                    const std::vector<fusionnet::Tensor>& values,
                                    Options opt = {}) {
    using fusionnet::TensorT;
    using fusionnet::VarT;

    std::vector<VarT<float>> leaves;
    leaves.reserve(values.size());
    for (const auto& v : values) leaves.push_back(fusionnet::make_leaf(v));
    auto root = build32(leaves);
    fusionnet::backward(root);

    double grad_max = 0.0;
    for (const auto& leaf : leaves)
        for (int64_t i = 0; i < leaf->grad().numel(); ++i)
            grad_max = std::max(grad_max, std::abs(static_cast<double>(leaf->grad()[i])));
    const double denom_floor = std::max(opt.floor_fraction * grad_max, 1e-12);

    std::vector<TensorT<double>> wide;
    wide.reserve(values.size());
    for (const auto& v : values) wide.push_back(v.template cast<double>());

    fusionnet::Rng rng(opt.seed);
    Report report;
    for (size_t leaf_idx = 0; leaf_idx < wide.size(); ++leaf_idx) {
        const int64_t numel = wide[leaf_idx].numel();
        std::vector<int64_t> coords;
        if (opt.samples_per_leaf <= 0 || opt.samples_per_leaf >= numel) {
            coords.resize(static_cast<size_t>(numel));
            for (int64_t i = 0; i < numel; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t s = 0; s < opt.samples_per_leaf; ++s)
                coords.push_back(static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(numel))));
        }
        for (int64_t coord : coords) {
            const double original = wide[leaf_idx][coord];
            const double h = opt.step;
            wide[leaf_idx][coord] = original + h;
            const double up = eval_scalar<double>(build64, wide);
            wide[leaf_idx][coord] = original - h;
            const double down = eval_scalar<double>(build64, wide);
            wide[leaf_idx][coord] = original;

            const double fd = (up - down) / (2.0 * h);
            const double analytic = static_cast<double>(leaves[leaf_idx]->grad()[coord]);
            const double denom = std::max({std::abs(analytic), std::abs(fd), denom_floor});
            report.max_rel_err = std::max(report.max_rel_err, std::abs(analytic - fd) / denom);
            report.coords_checked += 1;
        }
    }
    return report;
}

template <typename T>
Report check(const GraphBuilder<T>& build, std::vector<fusionnet::TensorT<T>> values,
             const Options& opt = {}) {
    using fusionnet::TensorT;
    using fusionnet::VarT;

    // Analytic gradients.
    std::vector<VarT<T>> leaves;
    leaves.reserve(values.size());
    for (const auto& v : values) leaves.push_back(fusionnet::make_leaf(v));
    auto root = build(leaves);
    fusionnet::backward(root);

    double grad_max = 0.0;
    for (const auto& leaf : leaves)
        for (int64_t i = 0; i < leaf->grad().numel(); ++i)
            grad_max = std::max(grad_max, std::abs(static_cast<double>(leaf->grad()[i])));
    const double denom_floor = std::max(opt.floor_fraction * grad_max, 1e-12);

    fusionnet::Rng rng(opt.seed);
    Report report;
    for (size_t leaf_idx = 0; leaf_idx < values.size(); ++leaf_idx) {
        const int64_t numel = values[leaf_idx].numel();
        std::vector<int64_t> coords;
        if (opt.samples_per_leaf <= 0 || opt.samples_per_leaf >= numel) {
            coords.resize(static_cast<size_t>(numel));
            for (int64_t i = 0; i < numel; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t s = 0; s < opt.samples_per_leaf; ++s)
                coords.push_back(static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(numel))));
        }

        for (int64_t coord : coords) {
            const T original = values[leaf_idx][coord];
            const double h = opt.step;

            values[leaf_idx][coord] = static_cast<T>(static_cast<double>(original) + h);
            const double up = eval_scalar(build, values);
            values[leaf_idx][coord] = static_cast<T>(static_cast<double>(original) - h);
            const double down = eval_scalar(build, values);
            values[leaf_idx][coord] = original;

            const double fd = (up - down) / (2.0 * h);
            const double analytic = static_cast<double>(leaves[leaf_idx]->grad()[coord]);
            const double denom = std::max({std::abs(analytic), std::abs(fd), denom_floor});
            const double rel = std::abs(analytic - fd) / denom;
            report.max_rel_err = std::max(report.max_rel_err, rel);
            report.coords_checked += 1;
        }
    }
    return report;
}

} // namespace gradcheck
