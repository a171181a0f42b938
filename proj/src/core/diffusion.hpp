#pragma once

#include "core/resize.hpp"
#include "core/schedule.hpp"
#include "core/tensor.hpp"

namespace casr {

// Residual-shifting forward marginal: q(x_t | x_0, y_0) has mean
// x_0 + eta_t (y_0 - x_0) and variance kappa^2 eta_t. Computed as
// (1 - eta_t) x_0 + eta_t y_0 so both endpoints are exact.
Image forward_marginal(const Image& x0, const Image& y0, int t, const DiffusionSchedule& sched,
                       const Image& noise);

// Reverse transition mean (eta_{t-1}/eta_t) x_t + (alpha_t/eta_t) x0_hat with
// standard deviation kappa sqrt((eta_{t-1}/eta_t) alpha_t); eta_0 := 0, so at
// t = 1 this is exactly x0_hat with zero variance.
Image reverse_step(const Image& x_t, const Image& x0_hat, int t, const DiffusionSchedule& sched,
                   const Image& noise);

// Self-consistency loss ||reference - down(x0_hat)||_2^2 (sum of squares).
double scg_loss(const Image& x0_hat, const Image& reference, const LinearResampler& down);

// One gradient-descent step on scg_loss in clean-image space:
// x0_hat - zeta * grad, where grad = -2 A^T (reference - A x0_hat) is the
// differentiation of the loss through the (linear) downsampling operator.
Image scg_update(const Image& x0_hat, const Image& reference, double zeta,
                 const LinearResampler& down);

}  // namespace casr
