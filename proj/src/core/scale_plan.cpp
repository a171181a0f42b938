#include "core/scale_plan.hpp"

#include <algorithm>
#include <cmath>

namespace casr {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::remainder_last: return "remainder_last";
        case Strategy::remainder_first: return "remainder_first";
        case Strategy::uniform: return "uniform";
    }
    return "?";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "rl" || name == "remainder_last")
        return Strategy::remainder_last;
    if (name == "rf" || name == "remainder_first")
        return Strategy::remainder_first;
    if (name == "us" || name == "uniform")
        return Strategy::uniform;
    fail(ErrorCode::invalid_argument, "unknown upsampling strategy: " + name);
}

std::pair<int, int> ScalePlan::output_res() const {
    if (stage_res.empty())
        return {input_h, input_w};
    return stage_res.back();
}

double ScalePlan::effective_scale(int stage) const {
    require(stage >= 0 && stage < n_stages(), ErrorCode::invalid_argument, "stage index out of range");
    const auto [ph, pw] = stage == 0 ? std::pair<int, int>{input_h, input_w} : stage_res[static_cast<size_t>(stage) - 1];
    const auto [h, w] = stage_res[static_cast<size_t>(stage)];
    return 0.5 * (static_cast<double>(h) / ph + static_cast<double>(w) / pw);
}

namespace {

// smallest n with fixed^n >= S, robust to floating drift at exact powers
int stage_count(double s, double fixed) {
    int n = 1;
    double p = fixed;
    while (p < s * (1.0 - 1e-12)) {
        p *= fixed;
        ++n;
        require(n < 10000, ErrorCode::invalid_argument, "scale decomposition does not terminate");
    }
    return n;
}

}  // namespace

ScalePlan plan_scales(double target_scale, double fixed_scale, int input_h, int input_w,
                      Strategy strategy) {
    require(std::isfinite(target_scale) && target_scale > 1.0, ErrorCode::invalid_argument,
            "plan_scales: target scale must be > 1 (no upsampling otherwise)");
    require(std::isfinite(fixed_scale) && fixed_scale > 1.0, ErrorCode::invalid_argument,
            "plan_scales: fixed scale must be > 1");
    require(input_h > 0 && input_w > 0, ErrorCode::invalid_argument,
            "plan_scales: input resolution must be positive");

    const int n = stage_count(target_scale, fixed_scale);
    double remainder = target_scale / std::pow(fixed_scale, n - 1);
    remainder = std::min(remainder, fixed_scale);  // clamp pure floating drift

    std::vector<double> scales;
    scales.reserve(static_cast<size_t>(n));
    switch (strategy) {
        case Strategy::remainder_last:
            for (int i = 0; i < n - 1; ++i)
                scales.push_back(fixed_scale);
            scales.push_back(remainder);
            break;
        case Strategy::remainder_first:
            scales.push_back(remainder);
            for (int i = 0; i < n - 1; ++i)
                scales.push_back(fixed_scale);
            break;
        case Strategy::uniform: {
            const double eq = std::pow(target_scale, 1.0 / n);
            for (int i = 0; i < n; ++i)
                scales.push_back(eq);
            break;
        }
    }

    ScalePlan plan;
    plan.target_scale = target_scale;
    plan.fixed_scale = fixed_scale;
    plan.strategy = strategy;
    plan.input_h = input_h;
    plan.input_w = input_w;

    // Rounded resolution chain. The final stage uses the exact product S so
    // the plan always lands on (round(h*S), round(w*S)). Stages whose rounded
    // resolution does not move (remainder within rounding of 1) are folded
    // into their neighbor, keeping the nominal product equal to S.
    int prev_h = input_h, prev_w = input_w;
    double running = 1.0;
    double carried = 1.0;  // nominal scale folded over from a degenerate stage
    for (int i = 0; i < n; ++i) {
        running = (i == n - 1) ? target_scale : running * scales[static_cast<size_t>(i)];
        const int h = static_cast<int>(std::llround(input_h * running));
        const int w = static_cast<int>(std::llround(input_w * running));
        if (h == prev_h && w == prev_w) {
            plan.merged_degenerate = true;
            carried *= scales[static_cast<size_t>(i)];
            continue;
        }
        plan.stage_scales.push_back(carried * scales[static_cast<size_t>(i)]);
        carried = 1.0;
        plan.stage_res.emplace_back(h, w);
        prev_h = h;
        prev_w = w;
    }
    if (carried != 1.0 && !plan.stage_scales.empty())
        plan.stage_scales.back() *= carried;

    return plan;
}

ScaleDistribution::ScaleDistribution(double p, double s) : p_fixed(p), fixed_scale(s) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::invalid_argument, "scale distribution: p must be in [0,1]");
    require(std::isfinite(s) && s > 1.0, ErrorCode::invalid_argument, "scale distribution: fixed scale must be > 1");
}

double sample_train_scale(const ScaleDistribution& dist, Rng& rng) {
    if (rng.uniform() < dist.p_fixed)
        return dist.fixed_scale;
    return rng.uniform(1.0, dist.fixed_scale);
}

}  // namespace casr
