#include "fusionnet/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fusionnet/image_io.hpp"

namespace fusionnet {

namespace fs = std::filesystem;

namespace {

std::set<std::string> png_stems(const fs::path& dir) {
    std::set<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".png") continue;
        stems.insert(entry.path().stem().string());
    }
    return stems;
}

} // namespace

DatasetManifest build_manifest(const fs::path& root) {
    const fs::path ir_dir = root / "ir";
    const fs::path vis_dir = root / "vis";
    if (!fs::is_directory(ir_dir))
        throw config_error("dataset root is missing the ir/ directory: " + ir_dir.string());
    if (!fs::is_directory(vis_dir))
        throw config_error("dataset root is missing the vis/ directory: " + vis_dir.string());

    DatasetManifest manifest;
    manifest.root = root;
    manifest.has_annotations = fs::is_directory(root / "ann");

    const auto ir_ids = png_stems(ir_dir);
    const auto vis_ids = png_stems(vis_dir);
    std::set_intersection(ir_ids.begin(), ir_ids.end(), vis_ids.begin(), vis_ids.end(),
                          std::back_inserter(manifest.ids));
    // std::set iterates lexicographically, so ids are already ordered.
    if (manifest.ids.empty())
        std::fprintf(stderr, "warning: no matched ir/vis pairs under %s\n", root.string().c_str());
    return manifest;
}

LoadedPair load_pair(const DatasetManifest& manifest, const std::string& id,
                     std::optional<std::pair<int64_t, int64_t>> target_hw) {
    LoadedPair out;
    out.pair.id = id;

    Tensor ir = load_image(manifest.root / "ir" / (id + ".png"));
    if (ir.extent(0) == 3) ir = rgb_to_luminance(ir);
    Tensor vis = load_image(manifest.root / "vis" / (id + ".png"));
    if (vis.extent(0) == 1) {
        Tensor rgb({3, vis.extent(1), vis.extent(2)});
        for (int64_t c = 0; c < 3; ++c)
            std::copy_n(vis.data(), vis.numel(), rgb.data() + c * vis.numel());
        vis = std::move(rgb);
    }
    if (ir.extent(1) != vis.extent(1) || ir.extent(2) != vis.extent(2))
        throw shape_error("pair '" + id + "' is not registered: ir " + shape_to_string(ir.shape()) +
                          " vs vis " + shape_to_string(vis.shape()));

    const int64_t native_h = ir.extent(1);
    const int64_t native_w = ir.extent(2);

    const fs::path ann_path = manifest.root / "ann" / (id + ".xml");
    if (fs::exists(ann_path)) {
        std::ifstream in(ann_path);
        if (!in) throw io_error("cannot read annotation file: " + ann_path.string());
        std::ostringstream text;
        text << in.rdbuf();
        out.annotations = parse_annotations(text.str());
    }
    out.annotations.id = id;
    out.annotations = clip_boxes(out.annotations, native_h, native_w);

    if (target_hw && (target_hw->first != native_h || target_hw->second != native_w)) {
        ir = resize_bilinear(ir, target_hw->first, target_hw->second);
        vis = resize_bilinear(vis, target_hw->first, target_hw->second);
        out.annotations =
            scale_boxes(out.annotations, native_h, native_w, target_hw->first, target_hw->second);
    }

    out.pair.ir = std::move(ir);
    out.pair.vis = std::move(vis);
    out.pair.vis_y = rgb_to_luminance(out.pair.vis);
    return out;
}

void write_manifest_cache(const DatasetManifest& manifest) {
    const fs::path path = manifest.root / "manifest.txt";
    std::ofstream out(path);
    if (!out) throw io_error("cannot write manifest cache: " + path.string());
    for (const auto& id : manifest.ids) out << id << "\n";
}

} // namespace fusionnet
