#include "core/diffusion.hpp"

#include <cmath>

namespace casr {

namespace {

void require_t(int t, const DiffusionSchedule& sched) {
    require(t >= 1 && t <= sched.n_steps(), ErrorCode::invalid_argument,
            "diffusion: timestep out of range [1, T]");
}

}  // namespace

Image forward_marginal(const Image& x0, const Image& y0, int t, const DiffusionSchedule& sched,
                       const Image& noise) {
    require_same_shape(x0, y0, "forward_marginal");
    require_same_shape(x0, noise, "forward_marginal");
    require_t(t, sched);
    const double eta = sched.eta(t);
    const double sigma = sched.kappa() * std::sqrt(eta);
    Image out = x0;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = (1.0 - eta) * x0.v[i] + eta * y0.v[i] + sigma * noise.v[i];
    return out;
}

Image reverse_step(const Image& x_t, const Image& x0_hat, int t, const DiffusionSchedule& sched,
                   const Image& noise) {
    require_same_shape(x_t, x0_hat, "reverse_step");
    require_same_shape(x_t, noise, "reverse_step");
    require_t(t, sched);
    const double coef_prev = sched.eta(t - 1) / sched.eta(t);
    const double coef_x0 = sched.alpha(t) / sched.eta(t);
    const double sigma = sched.kappa() * std::sqrt(coef_prev * sched.alpha(t));
    Image out = x_t;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = coef_prev * x_t.v[i] + coef_x0 * x0_hat.v[i] + sigma * noise.v[i];
    return out;
}

double scg_loss(const Image& x0_hat, const Image& reference, const LinearResampler& down) {
    const Image proj = down.apply(x0_hat, reference.height(), reference.width());
    require(proj.same_shape(reference), ErrorCode::invalid_argument,
            "scg_loss: resolution mismatch after downsampling");
    double loss = 0.0;
    for (size_t i = 0; i < proj.v.size(); ++i) {
        const double d = reference.v[i] - proj.v[i];
        loss += d * d;
    }
    return loss;
}

Image scg_update(const Image& x0_hat, const Image& reference, double zeta,
                 const LinearResampler& down) {
    require(std::isfinite(zeta) && zeta >= 0.0, ErrorCode::invalid_argument,
            "scg_update: zeta must be >= 0");
    if (zeta == 0.0)
        return x0_hat;
    const Image proj = down.apply(x0_hat, reference.height(), reference.width());
    require(proj.same_shape(reference), ErrorCode::invalid_argument,
            "scg_update: resolution mismatch after downsampling");
    Image residual = reference;
    for (size_t i = 0; i < residual.v.size(); ++i)
        residual.v[i] -= proj.v[i];
    const Image up = down.adjoint(residual, x0_hat.height(), x0_hat.width());
    Image out = x0_hat;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] += 2.0 * zeta * up.v[i];  // minus zeta times the loss gradient
    return out;
}

}  // namespace casr
