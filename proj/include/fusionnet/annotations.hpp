#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fusionnet {

// Axis-aligned ROI box in zero-based half-open pixel coordinates:
// x in [xmin, xmax), y in [ymin, ymax).
struct BoundingBox {
    int64_t xmin = 0;
    int64_t ymin = 0;
    int64_t xmax = 0;
    int64_t ymax = 0;
    std::string label;

    int64_t width() const { return xmax - xmin; }
    int64_t height() const { return ymax - ymin; }
    bool degenerate() const { return xmax <= xmin || ymax <= ymin; }

    bool operator==(const BoundingBox&) const = default;
};

struct AnnotationSet {
    std::string id;
    std::vector<BoundingBox> boxes;
    int64_t skipped = 0; // degenerate boxes dropped during parsing/scaling

    bool empty() const { return boxes.empty(); }
};

// VOC-style XML -> AnnotationSet. One box per <object>; 1-based inclusive file
// coordinates become zero-based half-open; boxes are clipped to the document's
// <size> when present; inverted/empty boxes are dropped and counted. Unknown
// elements are ignored.
AnnotationSet parse_annotations(const std::string& xml_text);

// Rescales boxes from one image size to another: floor for mins, ceil for
// maxes, then re-clip; boxes that collapse are dropped and counted.
AnnotationSet scale_boxes(const AnnotationSet& boxes, int64_t from_h, int64_t from_w,
                          int64_t to_h, int64_t to_w);

// Clips every box to [0,w) x [0,h); drops and counts degenerates.
AnnotationSet clip_boxes(const AnnotationSet& boxes, int64_t h, int64_t w);

std::string annotations_to_xml(const AnnotationSet& ann, int64_t h, int64_t w);

} // namespace fusionnet
