#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusionnet/annotations.hpp"
#include "fusionnet/tensor.hpp"

namespace fusionnet {

// Registered IR + VIS pair with cached luminance; all planes share H x W and
// live in [0,1].
struct ImagePair {
    std::string id;
    Tensor ir;    // [1,H,W]
    Tensor vis;   // [3,H,W]
    Tensor vis_y; // [1,H,W]

    int64_t height() const { return ir.extent(1); }
    int64_t width() const { return ir.extent(2); }
};

// Directory convention: root/ir/*.png, root/vis/*.png, root/ann/*.xml
// (annotations optional). Ids are filename stems present in both image dirs,
// in lexicographic order.
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::string> ids;
    bool has_annotations = false;

    bool empty() const { return ids.empty(); }
    size_t size() const { return ids.size(); }
};

DatasetManifest build_manifest(const std::filesystem::path& root);

struct LoadedPair {
    ImagePair pair;
    AnnotationSet annotations;
};

// Loads one pair (and its annotation set if present), optionally resizing both
// modalities to target_h x target_w with proportional box rescaling. An IR
// file stored as RGB collapses to luminance; a grayscale VIS replicates to
// three planes.
LoadedPair load_pair(const DatasetManifest& manifest, const std::string& id,
                     std::optional<std::pair<int64_t, int64_t>> target_hw = std::nullopt);

// Writes root/manifest.txt, one id per line.
void write_manifest_cache(const DatasetManifest& manifest);

} // namespace fusionnet
