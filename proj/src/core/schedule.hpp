#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace casr {

// Residual-shifting schedule: monotone {eta_t} with eta_1 -> 0, eta_T -> 1,
// perturbation level kappa, and alpha_t = eta_t - eta_{t-1} (alpha_1 = eta_1).
// eta is stored as the running sum of alpha so the telescoping identity
// sum(alpha) == eta_T holds exactly.
class DiffusionSchedule {
public:
    static DiffusionSchedule build(int n_steps, double kappa, double eta_min, double eta_max);
    static DiffusionSchedule from_eta(std::vector<double> eta, double kappa);

    int n_steps() const { return static_cast<int>(eta_.size()); }
    double kappa() const { return kappa_; }

    // t in [0, n_steps]; eta(0) == 0 by convention
    double eta(int t) const {
        require(t >= 0 && t <= n_steps(), ErrorCode::invalid_argument, "schedule: t out of range");
        return t == 0 ? 0.0 : eta_[static_cast<size_t>(t) - 1];
    }

    // t in [1, n_steps]
    double alpha(int t) const {
        require(t >= 1 && t <= n_steps(), ErrorCode::invalid_argument, "schedule: t out of range");
        return alpha_[static_cast<size_t>(t) - 1];
    }

    const std::vector<double>& eta_values() const { return eta_; }

private:
    DiffusionSchedule(std::vector<double> alpha, double kappa);

    std::vector<double> alpha_;
    std::vector<double> eta_;  // prefix sums of alpha_
    double kappa_ = 0.0;
};

}  // namespace casr
