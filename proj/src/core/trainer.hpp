#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/adam.hpp"
#include "core/base_sr.hpp"
#include "core/config.hpp"
#include "core/denoiser.hpp"
#include "core/scale_plan.hpp"
#include "core/schedule.hpp"
#include "core/synthetic.hpp"

namespace casr {

// One Algorithm-1 training sample: stage-i conditioning and target, both
// living at the stage output resolution, plus the initial LR image.
struct TrainSample {
    Image x_init;   // initial LR at its own resolution
    Image x_lr_up;  // stage conditioning image, upsampled to the output resolution
    Image x_hr;     // stage target at the output resolution
    int stage = 1;
    double scale = 2.0;
    CoordinateMap cmap;
};

// Samples stage ~ Uniform{1..n_stage_max} and scale ~ mixed distribution,
// then derives (x_init, x_lr, x_hr) with the canonical resampler from a
// random crop of the ground truth.
TrainSample make_train_sample(const Image& x_gt, const ScaleDistribution& dist, int n_stage_max,
                              int crop, Rng& rng);

// Pure additive Gaussian noise at the variance of k forward steps:
// x + kappa sqrt(eta_k) eps; k = 0 is the identity.
Image noise_augment(const Image& x_lr_up, int k_steps, const DiffusionSchedule& sched, Rng& rng);

struct TrainProbe {
    // captured tensors from the last step (for augmentation/oracle assertions)
    TensorF target_residual;
    TensorF conditioning_residual;
    std::vector<int> t_values;
    // test-only: replace the denoiser prediction before the loss
    std::function<void(TensorF& prediction, const TensorF& target)> mutate_prediction;
};

struct TrainerContext {
    DenoiserParams params;
    Adam adam;
    DiffusionSchedule sched;
    BaseSRModel base;
    RunConfig config;
    int64_t step = 0;
    uint64_t seed = 42;

    TrainerContext(DenoiserParams p, DiffusionSchedule s, BaseSRModel b, RunConfig c);
    double learning_rate() const;  // two-phase schedule with a single drop
};

// One optimizer step on the mean-L1 clean-residual objective. Returns the
// batch loss; throws with diagnostics on a non-finite loss.
double train_step(TrainerContext& ctx, const std::vector<TrainSample>& batch, TrainProbe* probe = nullptr);

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    std::vector<double> losses;
    int64_t steps = 0;
};

// Full Algorithm-1 training run driven by the config: dataset resolution,
// schedule/base construction, step loop, CSV logging, periodic checkpoints.
// resume_path restores params/moments/step for a bitwise-identical
// continuation.
TrainResult run_training(const RunConfig& config, const std::string& out_dir,
                         const std::string& resume_path = "");

// checkpoint <-> live objects
void save_denoiser_checkpoint(const std::string& path, const TrainerContext& ctx);
struct LoadedModel {
    DenoiserParams params;
    DiffusionSchedule sched;
    BaseSRModel base;
    RunConfig config;
    int64_t step = 0;
    uint64_t seed = 0;
    Adam adam;

    LoadedModel(DenoiserParams p, DiffusionSchedule s, BaseSRModel b, RunConfig c);
};
LoadedModel load_denoiser_model(const std::string& path);

void save_base_checkpoint(const std::string& path, const BaseSRModel& model);
BaseSRModel load_base_checkpoint(const std::string& path);

// deterministic train/val split used by training and the acceptance suite
void split_dataset(const Dataset& all, double val_fraction, Dataset& train, Dataset& val);

}  // namespace casr
