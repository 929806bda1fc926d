#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusionnet/adam.hpp"
#include "fusionnet/dataset.hpp"
#include "fusionnet/losses.hpp"
#include "fusionnet/metrics.hpp"
#include "fusionnet/model.hpp"

namespace fusionnet {

// Run hyperparameters. The on-disk config format is `key = value` lines with
// '#' comments; keys mirror these field names exactly.
struct TrainConfig {
    double lr = 1e-4;
    int64_t batch = 1;
    int64_t epochs = 10;
    int64_t channels = 64;
    double lambda1 = 0.5;
    double lambda2 = 0.1;
    double lambda3 = 0.2;
    uint64_t seed = 0;
    int64_t height = 512;
    int64_t width = 640;
    GradTarget grad_target = GradTarget::max_ir_vis;
    int64_t entropy_bins = kDefaultEntropyBins;
    int64_t checkpoint_every = 0; // steps between periodic checkpoints; 0 = final only
    std::string out_dir;

    LossWeights weights() const { return {lambda1, lambda2, lambda3}; }
    void validate() const;
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
// Canonical serialization: fixed key order, shortest exact float formatting.
std::string serialize_config(const TrainConfig& config);

// Portable binary snapshot of a run: magic "FNCK", version, config text,
// counters, RNG state, Adam hyperparameters, then every tensor (params in
// canonical order, then per-parameter Adam moments m and v) as
// name / rank / extents (u64 LE) / raw f32 LE data.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    TrainConfig config;
    FusionNetParams params;
    std::vector<AdamState> opt_states; // canonical parameter order
    int64_t epoch = 0;                 // completed epochs
    int64_t step = 0;                  // completed optimizer steps (1-based log steps)
    std::array<uint64_t, 4> rng_state{};

    static Checkpoint fresh(const TrainConfig& config);
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainLogRow {
    int64_t step = 0;
    int64_t epoch = 0;
    std::string id;
    LossBreakdown loss;
};

std::string loss_log_header();
std::string format_log_row(const TrainLogRow& row);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogRow> log;
};

// Full run from a fresh initialization: per epoch, pairs are visited in a
// permutation derived from (seed, epoch); each pair is one forward ->
// loss_total -> backward -> Adam step. Writes out_dir/loss_log.csv plus
// periodic and final checkpoints when out_dir is set.
TrainResult train(const TrainConfig& config, const DatasetManifest& manifest);

// Continues a checkpointed run until config.epochs is reached; the combined
// loss log equals an uninterrupted run's.
TrainResult train_from(const Checkpoint& start, const DatasetManifest& manifest);

// Forward + metrics per pair at native size (no gradients): SSIM / MSE /
// entropy of fused vs IR plus ROI-SSIM over the pair's boxes. force_alpha
// bypasses the alpha head with a constant map (debugging aid).
MetricReport evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest,
                      std::optional<double> force_alpha = std::nullopt);

inline ForwardArtifacts forward(const ImagePair& pair, const FusionNetParams& params) {
    return forward(pair.ir, pair.vis, pair.vis_y, params);
}

} // namespace fusionnet
