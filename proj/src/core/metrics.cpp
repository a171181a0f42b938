#include "core/metrics.hpp"

#include <cmath>
#include <limits>

namespace casr {

double psnr(const Image& a, const Image& b, double peak) {
    require_same_shape(a, b, "psnr");
    require(std::isfinite(peak) && peak > 0.0, ErrorCode::invalid_argument, "psnr: peak must be > 0");
    double mse = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.v.size());
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kRange = 2.0;  // images live in [-1, 1]
constexpr double kC1 = (0.01 * kRange) * (0.01 * kRange);
constexpr double kC2 = (0.03 * kRange) * (0.03 * kRange);

Image luminance(const Image& img) {
    require(img.ndim() == 3, ErrorCode::invalid_argument, "ssim: expected [C,H,W]");
    if (img.channels() == 1)
        return img;
    require(img.channels() == 3, ErrorCode::invalid_argument, "ssim: expected 1 or 3 channels");
    Image y({1, img.height(), img.width()});
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c)
            y.at3(0, r, c) = 0.299 * img.at3(0, r, c) + 0.587 * img.at3(1, r, c) + 0.114 * img.at3(2, r, c);
    return y;
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWin);
    const double c = (kWin - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        k[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * kSigma * kSigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (double& x : k)
        x /= sum;
    return k;
}

// separable "valid" Gaussian filtering of a [1,H,W] plane
std::vector<double> filter_valid(const Image& img, const std::vector<double>& k, int& oh, int& ow) {
    const int h = img.height(), w = img.width();
    oh = h - kWin + 1;
    ow = w - kWin + 1;
    std::vector<double> tmp(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i)
                acc += k[static_cast<size_t>(i)] * img.at3(0, y, x + i);
            tmp[static_cast<size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i)
                acc += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b, "ssim");
    require(a.height() >= kWin && a.width() >= kWin, ErrorCode::invalid_argument,
            "ssim: image smaller than the 11x11 window");
    const Image ya = luminance(a), yb = luminance(b);

    Image aa({1, ya.height(), ya.width()}), bb({1, ya.height(), ya.width()}), ab({1, ya.height(), ya.width()});
    for (size_t i = 0; i < ya.v.size(); ++i) {
        aa.v[i] = ya.v[i] * ya.v[i];
        bb.v[i] = yb.v[i] * yb.v[i];
        ab.v[i] = ya.v[i] * yb.v[i];
    }

    const auto k = gaussian_kernel();
    int oh = 0, ow = 0;
    const auto mu_a = filter_valid(ya, k, oh, ow);
    const auto mu_b = filter_valid(yb, k, oh, ow);
    const auto m_aa = filter_valid(aa, k, oh, ow);
    const auto m_bb = filter_valid(bb, k, oh, ow);
    const auto m_ab = filter_valid(ab, k, oh, ow);

    double total = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

ConsistencyMatrix self_ssim(const std::vector<std::pair<double, Image>>& outputs,
                            const LinearResampler& down) {
    require(outputs.size() >= 2, ErrorCode::invalid_argument, "self_ssim: need at least 2 scales");
    const int n = static_cast<int>(outputs.size());
    ConsistencyMatrix m;
    m.scales.reserve(static_cast<size_t>(n));
    for (const auto& [s, img] : outputs)
        m.scales.push_back(s);
    m.values.assign(static_cast<size_t>(n) * n, 1.0);

    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const Image& a = outputs[static_cast<size_t>(i)].second;
            const Image& b = outputs[static_cast<size_t>(j)].second;
            const bool a_coarser = static_cast<long>(a.height()) * a.width() <=
                                   static_cast<long>(b.height()) * b.width();
            const Image& lo = a_coarser ? a : b;
            const Image& hi = a_coarser ? b : a;
            const Image hi_dn = down.apply(hi, lo.height(), lo.width());
            const double v = a_coarser ? ssim(lo, hi_dn) : ssim(hi_dn, lo);
            m.values[static_cast<size_t>(i) * n + j] = v;
            m.values[static_cast<size_t>(j) * n + i] = v;
        }
    }
    return m;
}

}  // namespace casr
