#pragma once

#include <string>

#include "core/tensor.hpp"

namespace casr {

// 8-bit sRGB PNG <-> [-1,1] float image, v/127.5 - 1 and the exact inverse
// with round-half-to-even. Grayscale/palette/alpha inputs are converted to
// RGB with a warning on stderr; 16-bit PNGs are rejected.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

}  // namespace casr
