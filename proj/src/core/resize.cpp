#include "core/resize.hpp"

#include <algorithm>
#include <cmath>

namespace casr {

namespace {

double catmull_rom(double x) {
    constexpr double a = -0.5;
    x = std::fabs(x);
    if (x <= 1.0)
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0)
        return a * (((x - 5.0) * x + 8.0) * x - 4.0);
    return 0.0;
}

}  // namespace

std::vector<ResizeTap> build_bicubic_taps(int in_size, int out_size) {
    require(in_size > 0 && out_size > 0, ErrorCode::invalid_argument, "resize: non-positive size");
    std::vector<ResizeTap> taps(static_cast<size_t>(out_size));
    const double ratio = static_cast<double>(in_size) / out_size;
    const double support_scale = std::max(1.0, ratio);  // antialiasing when downscaling
    const double support = 2.0 * support_scale;

    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * ratio - 0.5;
        int lo = static_cast<int>(std::ceil(center - support));
        int hi = static_cast<int>(std::floor(center + support));
        std::vector<double> acc(static_cast<size_t>(in_size), 0.0);
        double sum = 0.0;
        int min_idx = in_size, max_idx = -1;
        for (int j = lo; j <= hi; ++j) {
            double w = catmull_rom((j - center) / support_scale);
            if (w == 0.0)
                continue;
            int cj = std::clamp(j, 0, in_size - 1);  // clamp edge handling
            acc[static_cast<size_t>(cj)] += w;
            sum += w;
            min_idx = std::min(min_idx, cj);
            max_idx = std::max(max_idx, cj);
        }
        ResizeTap tap;
        if (max_idx < min_idx) {  // degenerate; fall back to nearest
            tap.start = std::clamp(static_cast<int>(std::lround(center)), 0, in_size - 1);
            tap.weights = {1.0};
        } else {
            // trim exact zeros at the ends so identity resizes stay single-tap
            while (min_idx < max_idx && acc[static_cast<size_t>(min_idx)] == 0.0)
                ++min_idx;
            while (max_idx > min_idx && acc[static_cast<size_t>(max_idx)] == 0.0)
                --max_idx;
            tap.start = min_idx;
            tap.weights.assign(acc.begin() + min_idx, acc.begin() + max_idx + 1);
            for (double& w : tap.weights)
                w /= sum;
        }
        taps[static_cast<size_t>(o)] = std::move(tap);
    }
    return taps;
}

namespace {

// horizontal pass: [C,H,Win] -> [C,H,Wout]
template <typename T>
TensorT<T> apply_w(const TensorT<T>& in, const std::vector<ResizeTap>& taps) {
    const int c = in.shape[0], h = in.shape[1], win = in.shape[2];
    const int wout = static_cast<int>(taps.size());
    TensorT<T> out({c, h, wout});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            const T* row = &in.v[(static_cast<size_t>(ch) * h + y) * win];
            T* orow = &out.v[(static_cast<size_t>(ch) * h + y) * wout];
            for (int x = 0; x < wout; ++x) {
                const ResizeTap& t = taps[static_cast<size_t>(x)];
                double acc = 0.0;
                for (size_t k = 0; k < t.weights.size(); ++k)
                    acc += t.weights[k] * static_cast<double>(row[t.start + static_cast<int>(k)]);
                orow[x] = static_cast<T>(acc);
            }
        }
    }
    return out;
}

// vertical pass: [C,Hin,W] -> [C,Hout,W]
template <typename T>
TensorT<T> apply_h(const TensorT<T>& in, const std::vector<ResizeTap>& taps) {
    const int c = in.shape[0], hin = in.shape[1], w = in.shape[2];
    const int hout = static_cast<int>(taps.size());
    TensorT<T> out({c, hout, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < hout; ++y) {
            const ResizeTap& t = taps[static_cast<size_t>(y)];
            T* orow = &out.v[(static_cast<size_t>(ch) * hout + y) * w];
            for (size_t k = 0; k < t.weights.size(); ++k) {
                const double wt = t.weights[k];
                const T* row = &in.v[(static_cast<size_t>(ch) * hin + t.start + static_cast<int>(k)) * w];
                for (int x = 0; x < w; ++x)
                    orow[x] = static_cast<T>(static_cast<double>(orow[x]) + wt * static_cast<double>(row[x]));
            }
        }
    }
    return out;
}

// scatter transpose of apply_w: [C,H,Wout] -> [C,H,Win]
template <typename T>
TensorT<T> adjoint_w(const TensorT<T>& in, const std::vector<ResizeTap>& taps, int win) {
    const int c = in.shape[0], h = in.shape[1], wout = in.shape[2];
    TensorT<T> out({c, h, win});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            const T* row = &in.v[(static_cast<size_t>(ch) * h + y) * wout];
            T* orow = &out.v[(static_cast<size_t>(ch) * h + y) * win];
            for (int x = 0; x < wout; ++x) {
                const ResizeTap& t = taps[static_cast<size_t>(x)];
                const double g = static_cast<double>(row[x]);
                for (size_t k = 0; k < t.weights.size(); ++k)
                    orow[t.start + static_cast<int>(k)] =
                        static_cast<T>(static_cast<double>(orow[t.start + static_cast<int>(k)]) + t.weights[k] * g);
            }
        }
    }
    return out;
}

// scatter transpose of apply_h: [C,Hout,W] -> [C,Hin,W]
template <typename T>
TensorT<T> adjoint_h(const TensorT<T>& in, const std::vector<ResizeTap>& taps, int hin) {
    const int c = in.shape[0], hout = in.shape[1], w = in.shape[2];
    TensorT<T> out({c, hin, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < hout; ++y) {
            const ResizeTap& t = taps[static_cast<size_t>(y)];
            const T* row = &in.v[(static_cast<size_t>(ch) * hout + y) * w];
            for (size_t k = 0; k < t.weights.size(); ++k) {
                const double wt = t.weights[k];
                T* orow = &out.v[(static_cast<size_t>(ch) * hin + t.start + static_cast<int>(k)) * w];
                for (int x = 0; x < w; ++x)
                    orow[x] = static_cast<T>(static_cast<double>(orow[x]) + wt * static_cast<double>(row[x]));
            }
        }
    }
    return out;
}

}  // namespace

template <typename T>
TensorT<T> resize_bicubic(const TensorT<T>& img, int out_h, int out_w) {
    require(img.ndim() == 3, ErrorCode::invalid_argument, "resize: expected [C,H,W] tensor");
    require(out_h > 0 && out_w > 0, ErrorCode::invalid_argument, "resize: non-positive target");
    const auto tw = build_bicubic_taps(img.shape[2], out_w);
    const auto th = build_bicubic_taps(img.shape[1], out_h);
    return apply_h(apply_w(img, tw), th);
}

template <typename T>
TensorT<T> resize_bicubic_adjoint(const TensorT<T>& grad, int in_h, int in_w) {
    require(grad.ndim() == 3, ErrorCode::invalid_argument, "resize adjoint: expected [C,H,W] tensor");
    require(in_h > 0 && in_w > 0, ErrorCode::invalid_argument, "resize adjoint: non-positive source size");
    const auto tw = build_bicubic_taps(in_w, grad.shape[2]);
    const auto th = build_bicubic_taps(in_h, grad.shape[1]);
    return adjoint_w(adjoint_h(grad, th, in_h), tw, in_w);
}

template Image resize_bicubic<double>(const Image&, int, int);
template Image resize_bicubic_adjoint<double>(const Image&, int, int);
template TensorF resize_bicubic<float>(const TensorF&, int, int);
template TensorF resize_bicubic_adjoint<float>(const TensorF&, int, int);

}  // namespace casr
