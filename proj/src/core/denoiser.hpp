#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/nn.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace casr {

// Normalized pixel-center coordinate grid: channel 0 holds the horizontal
// coordinate -1 + (2k+1)/W, channel 1 the vertical one; values are strictly
// inside [-1, 1].
struct CoordinateMap {
    Image coords;  // [2, H, W]
    double cell_h = 0.0, cell_w = 0.0;

    int height() const { return coords.shape[1]; }
    int width() const { return coords.shape[2]; }
};

CoordinateMap make_coordinate_map(int h, int w);

// Per pixel and per band b: sin(2^b pi u), cos(2^b pi u) for each axis u.
// Output has 4*n_bands channels, band-major.
Image fourier_encode(const CoordinateMap& cmap, int n_bands);

struct DenoiserConfig {
    int base_channels = 24;
    std::vector<int> channel_multipliers{1, 2};
    int n_fourier_bands = 4;
    int embed_dim = 96;
    int n_res_blocks = 1;
    int encoder_channels = 12;

    void validate() const;
    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int channels(int level) const { return base_channels * channel_multipliers[static_cast<size_t>(level)]; }
    int adapter_channels(int level) const {
        return std::max(8, base_channels / 2) * channel_multipliers[static_cast<size_t>(level)];
    }
};

// Named weight tensors for the denoiser, the coordinate encoder/adapter and
// the LR/init feature encoders. Shapes are determined solely by the config.
struct DenoiserParams {
    DenoiserConfig config;
    std::map<std::string, nn::Var> tensors;

    const nn::Var& at(const std::string& name) const;
    size_t parameter_count() const;
    bool all_finite() const;
};

DenoiserParams init_params(const DenoiserConfig& config, Rng& rng);

// Batched training-path forward. coord_feat is [4B,H,W] (shared across the
// batch); t and s are per-sample conditioning values.
struct DenoiserInputs {
    TensorF x_t, lr_res, init_up;  // [N,3,H,W]
    TensorF coord_feat;            // [4B,H,W]
    std::vector<double> t, s;
};

nn::Var denoiser_forward(const DenoiserParams& params, const DenoiserInputs& in);

// Single-image clean-residual prediction (pure; no tape).
Image denoise(const Image& x_t, int t, double s, const Image& x_lr_up, const Image& x_init_up,
              const CoordinateMap& cmap, const DenoiserParams& params);

// sinusoidal embedding used for both t and 100*s
std::vector<float> sinusoidal_embedding(double v, int dim);

TensorF to_float(const Image& img);
Image to_double(const TensorF& t);  // [1,C,H,W] or [C,H,W] -> [C,H,W]

}  // namespace casr
