#include "fusionnet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

namespace fusionnet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail_io(const std::filesystem::path& path, const std::string& what) {
    throw io_error(what + ": " + path.string());
}

} // namespace

Tensor load_image(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) fail_io(path, "cannot open image");

    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw format_error("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_io(path, "libpng init failed for");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("corrupt PNG header in " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth != 8 || (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("unsupported PNG (need 8-bit gray or RGB): " + path.string());
    }
    const int64_t channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;

    std::vector<png_byte> raster(static_cast<size_t>(height) * width * channels);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = raster.data() + static_cast<size_t>(y) * width * channels;
    // Re-arm the jump target now that the buffers exist, so an error during the
    // pixel pass unwinds through live objects normally.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("corrupt PNG data in " + path.string());
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor out({channels, static_cast<int64_t>(height), static_cast<int64_t>(width)});
    for (int64_t y = 0; y < static_cast<int64_t>(height); ++y)
        for (int64_t x = 0; x < static_cast<int64_t>(width); ++x)
            for (int64_t c = 0; c < channels; ++c)
                out.at(c, y, x) =
                    static_cast<float>(raster[(y * width + x) * channels + c]) / 255.0f;
    return out;
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
    if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3))
        throw shape_error("save_image: expected [1,H,W] or [3,H,W], got " +
                          shape_to_string(image.shape()));
    const int64_t channels = image.extent(0);
    const int64_t height = image.extent(1);
    const int64_t width = image.extent(2);

    std::vector<png_byte> raster(static_cast<size_t>(height) * width * channels);
    for (int64_t y = 0; y < height; ++y)
        for (int64_t x = 0; x < width; ++x)
            for (int64_t c = 0; c < channels; ++c) {
                const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
                raster[(y * width + x) * channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }

    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) fail_io(path, "cannot write image");

    std::vector<png_bytep> rows(height);
    for (int64_t y = 0; y < height; ++y)
        rows[y] = raster.data() + static_cast<size_t>(y) * width * channels;

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail_io(path, "libpng init failed for");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail_io(path, "PNG write failed for");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor rgb_to_luminance(const Tensor& vis) {
    if (vis.rank() != 3 || vis.extent(0) != 3)
        throw shape_error("rgb_to_luminance: expected [3,H,W], got " + shape_to_string(vis.shape()));
    const int64_t h = vis.extent(1);
    const int64_t w = vis.extent(2);
    Tensor out({1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            out.at(0, y, x) = static_cast<float>(0.299 * vis.at(0, y, x) + 0.587 * vis.at(1, y, x) +
                                                 0.114 * vis.at(2, y, x));
    return out;
}

Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w) {
    if (img.rank() != 3) throw shape_error("resize_bilinear: expected rank-3 [C,H,W]");
    if (out_h < 1 || out_w < 1) throw contract_error("resize_bilinear: output size must be >= 1");
    const int64_t c_n = img.extent(0);
    const int64_t in_h = img.extent(1);
    const int64_t in_w = img.extent(2);
    if (in_h == out_h && in_w == out_w) return img;

    // Corner-aligned: output corner pixels sample input corners exactly; a
    // single-row/column output samples coordinate 0.
    const double scale_y = out_h > 1 ? static_cast<double>(in_h - 1) / (out_h - 1) : 0.0;
    const double scale_x = out_w > 1 ? static_cast<double>(in_w - 1) / (out_w - 1) : 0.0;

    Tensor out({c_n, out_h, out_w});
    for (int64_t c = 0; c < c_n; ++c)
        for (int64_t y = 0; y < out_h; ++y) {
            const double sy = y * scale_y;
            const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(sy), in_h - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, in_h - 1);
            const double fy = sy - static_cast<double>(y0);
            for (int64_t x = 0; x < out_w; ++x) {
                const double sx = x * scale_x;
                const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(sx), in_w - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, in_w - 1);
                const double fx = sx - static_cast<double>(x0);
                const double top = (1.0 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1);
                const double bottom = (1.0 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1);
                out.at(c, y, x) = static_cast<float>(std::clamp((1.0 - fy) * top + fy * bottom, 0.0, 1.0));
            }
        }
    return out;
}

} // namespace fusionnet
