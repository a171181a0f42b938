#include "core/schedule.hpp"

#include <cmath>

namespace casr {

DiffusionSchedule::DiffusionSchedule(std::vector<double> alpha, double kappa)
    : alpha_(std::move(alpha)), kappa_(kappa) {
    eta_.resize(alpha_.size());
    double sum = 0.0;
    for (size_t i = 0; i < alpha_.size(); ++i) {
        require(std::isfinite(alpha_[i]) && alpha_[i] > 0.0, ErrorCode::invalid_argument,
                "schedule: alpha must be positive (eta not strictly increasing)");
        sum += alpha_[i];
        eta_[i] = sum;
    }
    require(eta_.front() <= 1e-2, ErrorCode::invalid_argument, "schedule: eta_1 must be <= 1e-2");
    require(eta_.back() >= 0.99 && eta_.back() <= 1.0 + 1e-12, ErrorCode::invalid_argument,
            "schedule: eta_T must be in [0.99, 1]");
    require(std::isfinite(kappa_) && kappa_ > 0.0, ErrorCode::invalid_argument,
            "schedule: kappa must be positive");
}

DiffusionSchedule DiffusionSchedule::build(int n_steps, double kappa, double eta_min, double eta_max) {
    require(n_steps >= 2, ErrorCode::invalid_argument, "schedule: need at least 2 steps");
    require(eta_min > 0.0 && eta_min < eta_max && eta_max <= 1.0, ErrorCode::invalid_argument,
            "schedule: need 0 < eta_min < eta_max <= 1");

    // sqrt(eta_t) geometric from sqrt(eta_min) to sqrt(eta_max)
    std::vector<double> eta(static_cast<size_t>(n_steps));
    const double log_ratio = 0.5 * (std::log(eta_max) - std::log(eta_min));
    for (int t = 0; t < n_steps; ++t) {
        const double tau = static_cast<double>(t) / (n_steps - 1);
        const double root = std::sqrt(eta_min) * std::exp(log_ratio * tau);
        eta[static_cast<size_t>(t)] = root * root;
    }
    eta.front() = eta_min;
    eta.back() = eta_max;
    return from_eta(std::move(eta), kappa);
}

DiffusionSchedule DiffusionSchedule::from_eta(std::vector<double> eta, double kappa) {
    require(eta.size() >= 2, ErrorCode::invalid_argument, "schedule: need at least 2 steps");
    std::vector<double> alpha(eta.size());
    alpha[0] = eta[0];
    for (size_t i = 1; i < eta.size(); ++i)
        alpha[i] = eta[i] - eta[i - 1];
    return DiffusionSchedule(std::move(alpha), kappa);
}

}  // namespace casr
