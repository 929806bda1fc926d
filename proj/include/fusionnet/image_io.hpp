#pragma once

#include <cstdint>
#include <filesystem>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

// PNG in/out for 8-bit grayscale and RGB images. Loading maps byte b to
// b/255 into a [1,H,W] or [3,H,W] tensor; saving clamps to [0,1] and
// quantizes round(v*255), so save(load(file)) reproduces the pixel bytes.
Tensor load_image(const std::filesystem::path& path);
void save_image(const Tensor& image, const std::filesystem::path& path);

// BT.601 luminance: Y = 0.299 R + 0.587 G + 0.114 B.
Tensor rgb_to_luminance(const Tensor& vis);

// Corner-aligned bilinear resampling; output stays in [0,1] for inputs in [0,1].
Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w);

} // namespace fusionnet
