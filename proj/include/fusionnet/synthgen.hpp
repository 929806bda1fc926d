#pragma once

#include <cstdint>
#include <filesystem>

#include "fusionnet/dataset.hpp"

namespace fusionnet {

// Deterministic synthetic IR/VIS pair generator. IR carries low background
// plus Gaussian hot blobs with one ROI box per blob; VIS carries sinusoidal
// texture and a brightness gradient with no blob signal, so target content is
// only recoverable from IR.
struct SynthSpec {
    uint64_t seed = 0;
    int64_t height = 64;
    int64_t width = 64;
    int64_t n_targets = 3;
    int64_t radius_min = 4;  // ROI half-extent = 2 sigma
    int64_t radius_max = 10;
    double texture_freq = 3.0; // VIS sinusoid cycles across the image
    double noise_amp = 0.02;   // uniform +/- amplitude on both modalities
};

struct SynthPair {
    ImagePair pair;
    AnnotationSet annotations;
};

SynthPair gen_pair(const SynthSpec& spec);

// Materializes `count` pairs under root/{ir,vis,ann} (pair i uses seed+i) and
// writes root/manifest.txt; the returned manifest matches build_manifest(root).
DatasetManifest write_dataset(const SynthSpec& spec, const std::filesystem::path& root,
                              int64_t count);

} // namespace fusionnet
