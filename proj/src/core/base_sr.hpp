#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "core/nn.hpp"
#include "core/rng.hpp"
#include "core/synthetic.hpp"
#include "core/tensor.hpp"

namespace casr {

// The continuous-resolution baseline whose output anchors the residual space.
// Bicubic mode needs no weights and makes the diffusion pipeline testable
// with zero pretraining; learned mode is a small feature encoder plus a
// coordinate-queried per-pixel decoder regressing a correction on top of the
// bicubic render.
struct BaseSRModel {
    enum class Mode { bicubic, learned };

    Mode mode = Mode::bicubic;
    int channels = 24;
    int blocks = 2;
    int fourier_bands = 4;
    std::map<std::string, nn::Var> tensors;  // learned mode only

    static BaseSRModel bicubic() { return BaseSRModel{}; }
    static BaseSRModel learned_init(int channels, int blocks, int fourier_bands, Rng& rng);
};

// Deterministic continuous-resolution prediction at target_res (>= input).
Image base_upsample(const Image& x_init, int target_h, int target_w, const BaseSRModel& model);

struct PretrainReport {
    double val_psnr_model = 0.0;
    double val_psnr_bicubic = 0.0;
    double final_loss = 0.0;
};

struct PretrainOptions {
    int steps = 1500;
    int batch = 8;
    double lr = 1e-3;
    double scale = 2.0;          // training magnification
    double val_fraction = 0.1;
    uint64_t seed = 7;
    int channels = 24;
    int blocks = 2;
    int fourier_bands = 4;
};

// L1-regression pretraining on (bicubic-downsampled LR, ground truth) pairs.
// Fails loudly unless the learned model beats bicubic by >= 0.2 dB on the
// held-out split.
BaseSRModel pretrain_base(const Dataset& data, const PretrainOptions& opt, PretrainReport* report = nullptr);

}  // namespace casr
