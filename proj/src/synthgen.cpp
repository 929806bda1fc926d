#include "fusionnet/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "fusionnet/image_io.hpp"
#include "fusionnet/rng.hpp"

namespace fusionnet {

namespace fs = std::filesystem;

namespace {

constexpr double kIrBackground = 0.06;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

} // namespace

SynthPair gen_pair(const SynthSpec& spec) {
    const int64_t h = spec.height;
    const int64_t w = spec.width;
    if (h < 4 || w < 4) throw config_error("synth spec: image must be at least 4x4");
    if (spec.n_targets < 0) throw config_error("synth spec: n_targets must be >= 0");
    if (spec.radius_min < 1 || spec.radius_max < spec.radius_min)
        throw config_error("synth spec: need 1 <= radius_min <= radius_max");
    if (spec.n_targets > 0 && spec.radius_max >= std::min(h, w) / 2)
        throw config_error("synth spec: radius " + std::to_string(spec.radius_max) +
                           " leaves no room for targets in " + std::to_string(h) + "x" +
                           std::to_string(w));

    Rng rng(spec.seed, /*stream=*/0x5f7a11);

    SynthPair out;
    out.pair.id = "synth";
    out.pair.ir = Tensor({1, h, w});
    out.pair.vis = Tensor({3, h, w});

    // IR: flat low background, additive Gaussian blobs, then noise.
    std::vector<double> ir(static_cast<size_t>(h * w), kIrBackground);
    for (int64_t t = 0; t < spec.n_targets; ++t) {
        const int64_t radius =
            spec.radius_min + static_cast<int64_t>(rng.bounded(
                                  static_cast<uint64_t>(spec.radius_max - spec.radius_min + 1)));
        const int64_t cx =
            radius + static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(w - 2 * radius)));
        const int64_t cy =
            radius + static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(h - 2 * radius)));
        const double peak = rng.uniform(0.95, 1.0);
        const double sigma = static_cast<double>(radius) / 2.0; // box edge sits at 2 sigma
        const double amp = peak - kIrBackground;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double dx = static_cast<double>(x - cx);
                const double dy = static_cast<double>(y - cy);
                ir[y * w + x] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            }
        BoundingBox box;
        box.label = "target";
        box.xmin = cx - radius;
        box.xmax = cx + radius;
        box.ymin = cy - radius;
        box.ymax = cy + radius;
        out.annotations.boxes.push_back(std::move(box));
    }
    for (int64_t i = 0; i < h * w; ++i)
        out.pair.ir[i] = clamp01(ir[i] + rng.uniform(-spec.noise_amp, spec.noise_amp));
    out.annotations = clip_boxes(out.annotations, h, w);

    // VIS: sinusoidal texture + diagonal gradient + noise, no blob signal.
    const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(w);
            const double v = static_cast<double>(y) / static_cast<double>(h);
            const double texture = std::sin(2.0 * std::numbers::pi * spec.texture_freq * u + phase_x) *
                                   std::sin(2.0 * std::numbers::pi * spec.texture_freq * v + phase_y);
            const double base = 0.45 + 0.22 * texture + 0.18 * (u + v) / 2.0;
            const double r = base + rng.uniform(-spec.noise_amp, spec.noise_amp);
            const double g = base + rng.uniform(-spec.noise_amp, spec.noise_amp);
            const double b = base + rng.uniform(-spec.noise_amp, spec.noise_amp);
            out.pair.vis.at(0, y, x) = clamp01(r);
            out.pair.vis.at(1, y, x) = clamp01(g);
            out.pair.vis.at(2, y, x) = clamp01(b);
        }

    out.pair.vis_y = rgb_to_luminance(out.pair.vis);
    return out;
}

DatasetManifest write_dataset(const SynthSpec& spec, const fs::path& root, int64_t count) {
    if (count < 0) throw config_error("write_dataset: count must be >= 0");
    std::error_code ec;
    for (const char* sub : {"ir", "vis", "ann"}) {
        fs::create_directories(root / sub, ec);
        if (ec) throw io_error("cannot create dataset directory: " + (root / sub).string());
    }

    for (int64_t i = 0; i < count; ++i) {
        SynthSpec item = spec;
        item.seed = spec.seed + static_cast<uint64_t>(i);
        SynthPair generated = gen_pair(item);

        char name[32];
        std::snprintf(name, sizeof(name), "synth_%04lld", static_cast<long long>(i));
        const std::string id(name);
        generated.pair.id = id;
        generated.annotations.id = id;

        save_image(generated.pair.ir, root / "ir" / (id + ".png"));
        save_image(generated.pair.vis, root / "vis" / (id + ".png"));
        const fs::path ann_path = root / "ann" / (id + ".xml");
        std::ofstream ann(ann_path);
        if (!ann) throw io_error("cannot write annotation: " + ann_path.string());
        ann << annotations_to_xml(generated.annotations, item.height, item.width);
    }

    DatasetManifest manifest = build_manifest(root);
    write_manifest_cache(manifest);
    return manifest;
}

} // namespace fusionnet
