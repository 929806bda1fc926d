#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fusionnet/metrics.hpp"
#include "fusionnet/rng.hpp"

using namespace fusionnet;

namespace {

Tensor random_image(int64_t h, int64_t w, uint64_t seed) {
    Rng rng(seed);
    Tensor t({1, h, w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform());
    return t;
}

// Independent SSIM oracle: explicit 11x11 Gaussian-weighted statistics at
// every valid window position, no prefiltering.
double oracle_ssim(const Tensor& x, const Tensor& y) {
    const int64_t h = x.extent(1);
    const int64_t w = x.extent(2);
    double taps[11];
    double tap_sum = 0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5.0;
        taps[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        tap_sum += taps[i];
    }
    for (double& t : taps) t /= tap_sum;

    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double acc = 0;
    int64_t count = 0;
    for (int64_t oy = 0; oy + 11 <= h; ++oy)
        for (int64_t ox = 0; ox + 11 <= w; ++ox) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (int dy = 0; dy < 11; ++dy)
                for (int dx = 0; dx < 11; ++dx) {
                    const double weight = taps[dy] * taps[dx];
                    const double xv = x.at(0, oy + dy, ox + dx);
                    const double yv = y.at(0, oy + dy, ox + dx);
                    mx += weight * xv;
                    my += weight * yv;
                    mxx += weight * xv * xv;
                    myy += weight * yv * yv;
                    mxy += weight * xv * yv;
                }
            const double vx = mxx - mx * mx;
            const double vy = myy - my * my;
            const double cov = mxy - mx * my;
            acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return acc / static_cast<double>(count);
}

} // namespace

TEST_CASE("ssim of an image with itself is 1") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Tensor x = random_image(16, 20, seed);
        CHECK(std::abs(ssim(x, x) - 1.0) <= 1e-9);
    }
}

TEST_CASE("ssim is symmetric") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Tensor x = random_image(14, 14, 100 + seed);
        Tensor y = random_image(14, 14, 200 + seed);
        CHECK(std::abs(ssim(x, y) - ssim(y, x)) <= 1e-12);
    }
}

TEST_CASE("ssim matches the direct per-window oracle on a deterministic 16x16 pair") {
    Tensor x({1, 16, 16});
    Tensor y({1, 16, 16});
    for (int64_t r = 0; r < 16; ++r)
        for (int64_t c = 0; c < 16; ++c) {
            x.at(0, r, c) = static_cast<float>(0.5 + 0.5 * std::sin(0.7 * r + 0.3 * c));
            y.at(0, r, c) = static_cast<float>(0.5 + 0.4 * std::cos(0.4 * r - 0.6 * c));
        }
    CHECK(std::abs(ssim(x, y) - oracle_ssim(x, y)) <= 1e-9);

    Tensor z = random_image(18, 13, 42);
    Tensor v = random_image(18, 13, 43);
    CHECK(std::abs(ssim(z, v) - oracle_ssim(z, v)) <= 1e-9);
}

TEST_CASE("ssim rejects images smaller than the window") {
    Tensor small = random_image(10, 16, 1);
    Tensor other = random_image(10, 16, 2);
    CHECK_THROWS_AS(ssim(small, other), contract_error);
    CHECK_THROWS_AS(ssim(random_image(16, 10, 1), random_image(16, 10, 2)), contract_error);
}

TEST_CASE("mse_metric: identity, offset, symmetry, agreement with loss definition") {
    Tensor x = random_image(9, 9, 7);
    CHECK(mse_metric(x, x) == 0.0);

    Tensor shifted = x;
    for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 0.25f;
    CHECK(mse_metric(shifted, x) == doctest::Approx(0.0625).epsilon(1e-6));

    Tensor y = random_image(9, 9, 8);
    CHECK(mse_metric(x, y) == mse_metric(y, x));
}

TEST_CASE("entropy_metric: constants, exact uniform, fair coin") {
    CHECK(entropy_metric(Tensor::full({1, 12, 12}, 0.37f)) == 0.0);
    CHECK(entropy_metric(Tensor::full({1, 12, 12}, 1.0f)) == 0.0); // 1.0 maps to bin 255

    // 256x256 image holding each quantization level exactly 256 times
    Tensor uniform({1, 256, 256});
    for (int64_t i = 0; i < uniform.numel(); ++i)
        uniform[i] = (static_cast<float>(i / 256) + 0.5f) / 256.0f;
    CHECK(entropy_metric(uniform) == 8.0);

    Tensor coin({1, 16, 16});
    for (int64_t i = 0; i < coin.numel(); ++i) coin[i] = i % 2 == 0 ? 0.0f : 0.99f;
    CHECK(entropy_metric(coin) == 1.0);
}

TEST_CASE("entropy_metric is invariant under pixel permutation") {
    Tensor x = random_image(12, 12, 55);
    const double before = entropy_metric(x);
    std::vector<float> values(x.data(), x.data() + x.numel());
    Rng rng(99);
    rng.shuffle(values);
    Tensor shuffled({1, 12, 12}, values);
    CHECK(entropy_metric(shuffled) == before);
}

TEST_CASE("roi_ssim: full box equals global ssim; identical images give 1") {
    Tensor fused = random_image(20, 24, 61);
    Tensor ir = random_image(20, 24, 62);

    AnnotationSet full;
    full.boxes.push_back({0, 0, 24, 20, "all"});
    auto result = roi_ssim(fused, ir, full);
    REQUIRE(result.value.has_value());
    CHECK(std::abs(*result.value - ssim(fused, ir)) <= 1e-12);

    auto self = roi_ssim(fused, fused, full);
    CHECK(std::abs(*self.value - 1.0) <= 1e-9);
}

TEST_CASE("roi_ssim averages per-box crops and skips sub-window boxes") {
    Tensor fused = random_image(40, 40, 63);
    Tensor ir = random_image(40, 40, 64);

    AnnotationSet boxes;
    boxes.boxes.push_back({2, 2, 18, 18, "a"});   // 16x16
    boxes.boxes.push_back({20, 20, 36, 36, "b"}); // 16x16, disjoint
    boxes.boxes.push_back({0, 0, 8, 8, "tiny"});  // smaller than the window

    auto crop = [&](const Tensor& src, const BoundingBox& box) {
        Tensor out({1, box.height(), box.width()});
        for (int64_t y = 0; y < box.height(); ++y)
            for (int64_t x = 0; x < box.width(); ++x)
                out.at(0, y, x) = src.at(0, box.ymin + y, box.xmin + x);
        return out;
    };
    const double s1 = oracle_ssim(crop(fused, boxes.boxes[0]), crop(ir, boxes.boxes[0]));
    const double s2 = oracle_ssim(crop(fused, boxes.boxes[1]), crop(ir, boxes.boxes[1]));

    auto result = roi_ssim(fused, ir, boxes);
    REQUIRE(result.value.has_value());
    CHECK(result.evaluated == 2);
    CHECK(result.skipped == 1);
    CHECK(*result.value == doctest::Approx(0.5 * (s1 + s2)).epsilon(1e-9));
}

TEST_CASE("roi_ssim reports absence when no box qualifies") {
    Tensor fused = random_image(20, 20, 65);
    Tensor ir = random_image(20, 20, 66);
    AnnotationSet boxes;
    boxes.boxes.push_back({0, 0, 5, 5, "tiny"});
    auto result = roi_ssim(fused, ir, boxes);
    CHECK_FALSE(result.value.has_value());
    CHECK(result.skipped == 1);

    auto none = roi_ssim(fused, ir, AnnotationSet{});
    CHECK_FALSE(none.value.has_value());
}

TEST_CASE("metric report means are the arithmetic means of the rows") {
    MetricReport report;
    report.rows.push_back({"a", 0.8, 0.1, 5.0, 0.9, 0});
    report.rows.push_back({"b", 0.6, 0.3, 6.0, std::nullopt, 1});
    report.rows.push_back({"c", 0.7, 0.2, 7.0, 0.7, 0});
    report.compute_means();
    CHECK(report.mean_ssim == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(report.mean_mse == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(report.mean_entropy == doctest::Approx(6.0).epsilon(1e-12));
    REQUIRE(report.mean_roi_ssim.has_value());
    CHECK(*report.mean_roi_ssim == doctest::Approx(0.8).epsilon(1e-12));
}
