#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace casr {

// One output sample of a 1-D resampling pass: a contiguous run of input
// indices [start, start + weights.size()) and their normalized weights.
struct ResizeTap {
    int start = 0;
    std::vector<double> weights;
};

// Catmull-Rom kernel (bicubic, a = -0.5). When downscaling the support is
// widened by the scale ratio for antialiasing. Edge handling is clamp
// (replicate), folded into the taps; weights are normalized to sum to 1.
std::vector<ResizeTap> build_bicubic_taps(int in_size, int out_size);

// Canonical resampler shared by every module that resizes images.
template <typename T>
TensorT<T> resize_bicubic(const TensorT<T>& img, int out_h, int out_w);

// Adjoint (transpose) of resize_bicubic as a linear map: takes a tensor at
// the output resolution and scatters it back to [in_h, in_w]. This is the
// backward pass of the resampler.
template <typename T>
TensorT<T> resize_bicubic_adjoint(const TensorT<T>& grad, int in_h, int in_w);

// Linear downsampling/resampling operator with an explicit adjoint; the
// self-consistency guidance gradient differentiates through this interface.
struct LinearResampler {
    virtual ~LinearResampler() = default;
    virtual Image apply(const Image& x, int out_h, int out_w) const = 0;
    virtual Image adjoint(const Image& y, int in_h, int in_w) const = 0;
};

struct BicubicResampler final : LinearResampler {
    Image apply(const Image& x, int out_h, int out_w) const override {
        return resize_bicubic(x, out_h, out_w);
    }
    Image adjoint(const Image& y, int in_h, int in_w) const override {
        return resize_bicubic_adjoint(y, in_h, in_w);
    }
};

}  // namespace casr
