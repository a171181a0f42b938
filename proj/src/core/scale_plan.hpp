#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace casr {

enum class Strategy { remainder_last, remainder_first, uniform };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// Decomposition of a target scale S into per-stage scales and rounded
// integer stage resolutions. stage_scales are the nominal factors whose
// product is exactly S; effective_scale(i) is recomputed from the rounded
// resolutions and is what downstream consumers should treat as the stage's
// true magnification.
struct ScalePlan {
    double target_scale = 0.0;
    double fixed_scale = 0.0;
    Strategy strategy = Strategy::remainder_last;
    int input_h = 0, input_w = 0;
    std::vector<double> stage_scales;
    std::vector<std::pair<int, int>> stage_res;  // (h, w) per stage, strictly increasing
    bool merged_degenerate = false;  // a near-1 remainder rounded to a no-op and was folded away

    int n_stages() const { return static_cast<int>(stage_scales.size()); }
    std::pair<int, int> output_res() const;
    double effective_scale(int stage) const;  // stage in [0, n_stages)
};

ScalePlan plan_scales(double target_scale, double fixed_scale, int input_h, int input_w,
                      Strategy strategy);

// Mixed training distribution over per-stage scales: mass p_fixed on exactly
// fixed_scale, the remainder uniform on [1, fixed_scale).
struct ScaleDistribution {
    double p_fixed = 0.5;
    double fixed_scale = 2.0;

    ScaleDistribution(double p, double s);
};

double sample_train_scale(const ScaleDistribution& dist, Rng& rng);

}  // namespace casr
