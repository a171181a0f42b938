#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace casr {

// Dense row-major tensor. Images are TensorT<double> with shape [C,H,W];
// network activations are TensorT<float> with shape [N,C,H,W].
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> v;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), T(0)) {}
    TensorT(std::vector<int> s, T fill) : shape(std::move(s)), v(numel_of(shape), fill) {}

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            require(d > 0, ErrorCode::invalid_argument, "tensor dimensions must be positive");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    size_t numel() const { return v.size(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    // [C,H,W] accessors
    int channels() const { return shape[0]; }
    int height() const { return shape[ndim() - 2]; }
    int width() const { return shape[ndim() - 1]; }

    T& at3(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    T at3(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    T& at4(int n, int c, int y, int x) {
        return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    T at4(int n, int c, int y, int x) const {
        return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x)))
                return false;
        return true;
    }
};

using Image = TensorT<double>;
using TensorF = TensorT<float>;

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i)
        out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
    require(a.same_shape(b), ErrorCode::invalid_argument,
            std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

inline Image clip_image(const Image& img, double lo = -1.0, double hi = 1.0) {
    Image out = img;
    for (double& x : out.v)
        x = x < lo ? lo : (x > hi ? hi : x);
    return out;
}

}  // namespace casr
