#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/base_sr.hpp"
#include "core/denoiser.hpp"
#include "core/resize.hpp"
#include "core/scale_plan.hpp"
#include "core/schedule.hpp"

namespace casr {

struct SamplerConfig {
    enum class ScgReference { previous_stage, initial_lr, off };

    std::vector<double> zeta{0.1};  // scalar broadcast, or one entry per stage
    uint64_t seed = 42;
    ScgReference scg_reference = ScgReference::previous_stage;
    Strategy strategy = Strategy::remainder_last;
    std::string dump_stage_dir;  // empty = no per-stage dumps
};

struct SampleProbe {
    int denoise_calls = 0;
    std::vector<Image> stage_outputs;                // x_sr^i per stage
    std::vector<std::pair<int, int>> stage_res;
    std::vector<double> stage_scales;                // effective scales fed to the denoiser
};

// Full cascade inference: per stage, seed the chain from the conditioning
// residual, iterate the reverse process with self-consistency guidance on the
// clean estimate, then add the base render back. Deterministic under a fixed
// seed; the result is clipped to [-1, 1] at the stated output resolution.
Image super_resolve(const Image& x_init, double target_scale, const DenoiserParams& params,
                    const BaseSRModel& base, const DiffusionSchedule& sched, const SamplerConfig& cfg,
                    double s_fix, SampleProbe* probe = nullptr);

// Per-pixel RMS deviation between the reference and the downsampled output;
// the post-hoc diagnostic form of the self-consistency loss.
double self_consistency_residual(const Image& x_sr, const Image& reference, const LinearResampler& down);

}  // namespace casr
