#pragma once

#include <utility>
#include <vector>

#include "core/resize.hpp"
#include "core/tensor.hpp"

namespace casr {

// 10 log10(peak^2 / MSE); identical images give +infinity.
double psnr(const Image& a, const Image& b, double peak);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), constants on the
// luminance range of [-1,1] images (L = 2). Color images are compared on an
// ITU-R 601 luminance conversion. Requires min side >= 11.
double ssim(const Image& a, const Image& b);

// Cross-scale structural-consistency matrix: entry (i,j) compares the two
// outputs on the coarser of the two grids (the higher-resolution output is
// downsampled there with the canonical resampler); the diagonal is 1 by
// definition.
struct ConsistencyMatrix {
    std::vector<double> scales;
    std::vector<double> values;  // row-major n x n

    double at(int i, int j) const { return values[static_cast<size_t>(i) * scales.size() + j]; }
    int size() const { return static_cast<int>(scales.size()); }
};

ConsistencyMatrix self_ssim(const std::vector<std::pair<double, Image>>& outputs,
                            const LinearResampler& down);

}  // namespace casr
