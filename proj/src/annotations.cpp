#include "fusionnet/annotations.hpp"

#include <cmath>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "fusionnet/errors.hpp"

namespace fusionnet {

namespace {

namespace pt = boost::property_tree;

int64_t require_int(const pt::ptree& node, const char* key, const char* element) {
    const auto child = node.get_optional<std::string>(key);
    if (!child)
        throw parse_error(std::string("annotation ") + element + " is missing <" + key + ">");
    try {
        size_t consumed = 0;
        const long long v = std::stoll(*child, &consumed);
        // allow trailing whitespace only
        for (size_t i = consumed; i < child->size(); ++i)
            if (!std::isspace(static_cast<unsigned char>((*child)[i])))
                throw parse_error("");
        return static_cast<int64_t>(v);
    } catch (const parse_error&) {
        throw parse_error(std::string("annotation ") + element + "/<" + key +
                          "> is not an integer: '" + *child + "'");
    } catch (const std::exception&) {
        throw parse_error(std::string("annotation ") + element + "/<" + key +
                          "> is not an integer: '" + *child + "'");
    }
}

} // namespace

AnnotationSet parse_annotations(const std::string& xml_text) {
    pt::ptree tree;
    std::istringstream stream(xml_text);
    try {
        pt::read_xml(stream, tree);
    } catch (const pt::xml_parser_error& e) {
        throw parse_error(std::string("malformed annotation XML: ") + e.what());
    }

    const auto root = tree.get_child_optional("annotation");
    if (!root) throw parse_error("annotation XML has no <annotation> element");

    AnnotationSet out;
    out.id = root->get<std::string>("filename", "");
    // strip a trailing extension from the filename stem
    if (const auto dot = out.id.rfind('.'); dot != std::string::npos) out.id.resize(dot);

    const int64_t width = root->get<int64_t>("size.width", 0);
    const int64_t height = root->get<int64_t>("size.height", 0);

    for (const auto& [tag, object] : *root) {
        if (tag != "object") continue; // unknown elements are ignored
        const auto bndbox = object.get_child_optional("bndbox");
        if (!bndbox) throw parse_error("annotation <object> is missing <bndbox>");
        BoundingBox box;
        box.label = object.get<std::string>("name", "");
        // VOC coordinates are 1-based inclusive; convert to 0-based half-open.
        box.xmin = require_int(*bndbox, "xmin", "<bndbox>") - 1;
        box.ymin = require_int(*bndbox, "ymin", "<bndbox>") - 1;
        box.xmax = require_int(*bndbox, "xmax", "<bndbox>");
        box.ymax = require_int(*bndbox, "ymax", "<bndbox>");
        out.boxes.push_back(std::move(box));
    }

    if (width > 0 && height > 0) return clip_boxes(out, height, width);

    // No size element: only drop inverted/empty boxes.
    AnnotationSet cleaned;
    cleaned.id = out.id;
    for (auto& box : out.boxes) {
        box.xmin = std::max<int64_t>(0, box.xmin);
        box.ymin = std::max<int64_t>(0, box.ymin);
        if (box.degenerate())
            cleaned.skipped += 1;
        else
            cleaned.boxes.push_back(box);
    }
    return cleaned;
}

AnnotationSet clip_boxes(const AnnotationSet& boxes, int64_t h, int64_t w) {
    AnnotationSet out;
    out.id = boxes.id;
    out.skipped = boxes.skipped;
    for (const auto& raw : boxes.boxes) {
        BoundingBox box = raw;
        box.xmin = std::max<int64_t>(0, box.xmin);
        box.ymin = std::max<int64_t>(0, box.ymin);
        box.xmax = std::min<int64_t>(w, box.xmax);
        box.ymax = std::min<int64_t>(h, box.ymax);
        if (box.degenerate())
            out.skipped += 1;
        else
            out.boxes.push_back(std::move(box));
    }
    return out;
}

AnnotationSet scale_boxes(const AnnotationSet& boxes, int64_t from_h, int64_t from_w, int64_t to_h,
                          int64_t to_w) {
    if (from_h <= 0 || from_w <= 0 || to_h <= 0 || to_w <= 0)
        throw contract_error("scale_boxes: dimensions must be positive");
    const double sy = static_cast<double>(to_h) / static_cast<double>(from_h);
    const double sx = static_cast<double>(to_w) / static_cast<double>(from_w);
    AnnotationSet scaled;
    scaled.id = boxes.id;
    scaled.skipped = boxes.skipped;
    for (const auto& raw : boxes.boxes) {
        if (raw.degenerate()) {
            scaled.skipped += 1;
            continue;
        }
        BoundingBox box = raw;
        // floor mins, ceil maxes: a surviving target never shrinks to nothing
        // unless it was degenerate to begin with.
        box.xmin = static_cast<int64_t>(std::floor(raw.xmin * sx));
        box.ymin = static_cast<int64_t>(std::floor(raw.ymin * sy));
        box.xmax = static_cast<int64_t>(std::ceil(raw.xmax * sx));
        box.ymax = static_cast<int64_t>(std::ceil(raw.ymax * sy));
        scaled.boxes.push_back(std::move(box));
    }
    return clip_boxes(scaled, to_h, to_w);
}

std::string annotations_to_xml(const AnnotationSet& ann, int64_t h, int64_t w) {
    std::ostringstream xml;
    xml << "<annotation>\n";
    xml << "  <filename>" << ann.id << ".png</filename>\n";
    xml << "  <size>\n    <width>" << w << "</width>\n    <height>" << h
        << "</height>\n    <depth>1</depth>\n  </size>\n";
    for (const auto& box : ann.boxes) {
        xml << "  <object>\n    <name>" << box.label << "</name>\n    <bndbox>\n";
        // back to 1-based inclusive VOC coordinates
        xml << "      <xmin>" << box.xmin + 1 << "</xmin>\n";
        xml << "      <ymin>" << box.ymin + 1 << "</ymin>\n";
        xml << "      <xmax>" << box.xmax << "</xmax>\n";
        xml << "      <ymax>" << box.ymax << "</ymax>\n";
        xml << "    </bndbox>\n  </object>\n";
    }
    xml << "</annotation>\n";
    return xml.str();
}

} // namespace fusionnet
