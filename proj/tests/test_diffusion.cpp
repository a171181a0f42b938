#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "core/diffusion.hpp"
#include "core/rng.hpp"
#include "test_util.hpp"

using namespace casr;

namespace {

// integer-factor mean pooling with an exact adjoint, for hand-checkable cases
struct MeanPool final : LinearResampler {
    Image apply(const Image& x, int oh, int ow) const override {
        const int fh = x.height() / oh, fw = x.width() / ow;
        Image out({x.channels(), oh, ow});
        for (int c = 0; c < x.channels(); ++c)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    double acc = 0.0;
                    for (int i = 0; i < fh; ++i)
                        for (int j = 0; j < fw; ++j)
                            acc += x.at3(c, y * fh + i, xx * fw + j);
                    out.at3(c, y, xx) = acc / (fh * fw);
                }
        return out;
    }
    Image adjoint(const Image& g, int ih, int iw) const override {
        const int fh = ih / g.height(), fw = iw / g.width();
        Image out({g.channels(), ih, iw});
        for (int c = 0; c < g.channels(); ++c)
            for (int y = 0; y < ih; ++y)
                for (int x = 0; x < iw; ++x)
                    out.at3(c, y, x) = g.at3(c, y / fh, x / fw) / (fh * fw);
        return out;
    }
};

Image constant_image(int c, int h, int w, double v) { return Image({c, h, w}, v); }

}  // namespace

TEST_CASE("schedule: T=2 endpoints are pinned") {
    auto s = DiffusionSchedule::build(2, 2.0, 0.01, 1.0);
    CHECK(s.eta(1) == 0.01);
    CHECK(s.eta(2) == 1.0);
    CHECK(s.alpha(1) == 0.01);
    CHECK(s.alpha(2) == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("schedule: telescoping identity holds exactly") {
    for (int T : {2, 5, 15, 40}) {
        auto s = DiffusionSchedule::build(T, 2.0, 1e-3, 0.999);
        double sum = 0.0;
        for (int t = 1; t <= T; ++t)
            sum += s.alpha(t);
        CHECK(sum == s.eta(T));
    }
}

TEST_CASE("schedule: sqrt-geometric spacing matches an independent recomputation") {
    const int T = 15;
    const double eta_min = 1e-3, eta_max = 0.999;
    auto s = DiffusionSchedule::build(T, 2.0, eta_min, eta_max);
    double prev = 0.0;
    for (int t = 1; t <= T; ++t) {
        const long double tau = static_cast<long double>(t - 1) / (T - 1);
        const long double root = std::sqrt((long double)eta_min) *
                                 std::pow(std::sqrt((long double)eta_max) / std::sqrt((long double)eta_min), tau);
        const double expect = static_cast<double>(root * root);
        CHECK(s.eta(t) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(s.eta(t) > prev);
        prev = s.eta(t);
    }
}

TEST_CASE("schedule: rejects out-of-range parameters") {
    CHECK_THROWS_AS(DiffusionSchedule::build(1, 2.0, 1e-3, 0.999), Error);
    CHECK_THROWS_AS(DiffusionSchedule::build(15, 2.0, 0.5, 0.4), Error);
    CHECK_THROWS_AS(DiffusionSchedule::build(15, 2.0, 0.0, 0.999), Error);
    CHECK_THROWS_AS(DiffusionSchedule::build(15, 2.0, 1e-3, 1.5), Error);
    CHECK_THROWS_AS(DiffusionSchedule::build(15, -1.0, 1e-3, 0.999), Error);
    CHECK_THROWS_AS(DiffusionSchedule::build(15, 2.0, 0.05, 0.999), Error);   // eta_1 -> 0 violated
    CHECK_THROWS_AS(DiffusionSchedule::build(15, 2.0, 1e-3, 0.95), Error);    // eta_T -> 1 violated
}

TEST_CASE("forward_marginal: eta=1 returns y0 exactly, eta_1 stays near x0") {
    auto s = DiffusionSchedule::build(2, 2.0, 0.01, 1.0);
    Image x0 = test::random_image(3, 6, 6, 1);
    Image y0 = test::random_image(3, 6, 6, 2);
    Image zero = constant_image(3, 6, 6, 0.0);

    Image at_T = forward_marginal(x0, y0, 2, s, zero);
    for (size_t i = 0; i < at_T.v.size(); ++i)
        CHECK(at_T.v[i] == y0.v[i]);

    Image at_1 = forward_marginal(x0, y0, 1, s, zero);
    for (size_t i = 0; i < at_1.v.size(); ++i)
        CHECK(std::fabs(at_1.v[i] - x0.v[i]) <= 0.01 * std::fabs(y0.v[i] - x0.v[i]) + 1e-15);
}

TEST_CASE("forward_marginal: Monte-Carlo mean and variance match Eq closed form") {
    auto s = DiffusionSchedule::build(15, 2.0, 1e-3, 0.999);
    const int t = 7, n = 100000;
    const double x0 = 0.3, y0 = -0.5;
    Image ix0 = constant_image(1, 1, 1, x0), iy0 = constant_image(1, 1, 1, y0);
    Rng rng(99);
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        Image noise = gaussian_image(1, 1, 1, rng);
        const double v = forward_marginal(ix0, iy0, t, s, noise).v[0];
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double eta = s.eta(t);
    const double expect_mean = x0 + eta * (y0 - x0);
    const double expect_var = s.kappa() * s.kappa() * eta;
    CHECK(std::fabs(mean - expect_mean) < 0.02 * std::fabs(expect_mean));
    CHECK(std::fabs(var - expect_var) < 0.02 * expect_var);
}

TEST_CASE("reverse_step: t=1 is exactly the identity onto x0_hat") {
    auto s = DiffusionSchedule::build(15, 2.0, 1e-3, 0.999);
    Image x_t = test::random_image(3, 5, 4, 3);
    Image x0_hat = test::random_image(3, 5, 4, 4);
    Image noise = test::random_image(3, 5, 4, 5);
    Image out = reverse_step(x_t, x0_hat, 1, s, noise);
    for (size_t i = 0; i < out.v.size(); ++i)
        CHECK(out.v[i] == x0_hat.v[i]);
}

TEST_CASE("reverse_step: deterministic oracle chain recovers x0") {
    auto s = DiffusionSchedule::build(15, 2.0, 1e-3, 0.999);
    Image x0 = test::random_image(3, 8, 8, 6);
    Image y0 = test::random_image(3, 8, 8, 7);
    Image zero = constant_image(3, 8, 8, 0.0);
    Image x = forward_marginal(x0, y0, s.n_steps(), s, zero);
    for (int t = s.n_steps(); t >= 1; --t)
        x = reverse_step(x, x0, t, s, zero);
    for (size_t i = 0; i < x.v.size(); ++i)
        CHECK(std::fabs(x.v[i] - x0.v[i]) < 1e-9);
}

TEST_CASE("reverse_step: Monte-Carlo variance matches the transition variance") {
    auto s = DiffusionSchedule::build(15, 2.0, 1e-3, 0.999);
    const int t = 9, n = 100000;
    Image x_t = constant_image(1, 1, 1, 0.2), x0_hat = constant_image(1, 1, 1, -0.1);
    Rng rng(123);
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        Image noise = gaussian_image(1, 1, 1, rng);
        const double v = reverse_step(x_t, x0_hat, t, s, noise).v[0];
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double expect_var = s.kappa() * s.kappa() * (s.eta(t - 1) / s.eta(t)) * s.alpha(t);
    CHECK(std::fabs(var - expect_var) < 0.02 * expect_var);
}

TEST_CASE("scg_loss: zero residual, hand-computed pool case, permutation symmetry") {
    MeanPool pool;
    Image ones = constant_image(1, 2, 2, 1.0);
    Image ref = constant_image(1, 1, 1, 2.0);
    CHECK(scg_loss(ones, pool.apply(ones, 1, 1), pool) == 0.0);
    CHECK(scg_loss(ones, ref, pool) == doctest::Approx(1.0).epsilon(1e-15));

    // identical permutation of reference and projection leaves the loss unchanged
    BicubicResampler bic;
    Image x = test::random_image(3, 8, 8, 9);
    Image r = test::random_image(3, 4, 4, 10);
    const double base = scg_loss(x, r, bic);
    Image xp = x, rp = r;
    std::reverse(rp.v.begin(), rp.v.end());
    struct Permuted final : LinearResampler {
        const LinearResampler& inner;
        explicit Permuted(const LinearResampler& i) : inner(i) {}
        Image apply(const Image& im, int h, int w) const override {
            Image out = inner.apply(im, h, w);
            std::reverse(out.v.begin(), out.v.end());
            return out;
        }
        Image adjoint(const Image& g, int h, int w) const override {
            Image gg = g;
            std::reverse(gg.v.begin(), gg.v.end());
            return inner.adjoint(gg, h, w);
        }
    } perm(bic);
    CHECK(scg_loss(xp, rp, perm) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("scg_update: null step, hand-computed pool case") {
    MeanPool pool;
    Image ones = constant_image(1, 2, 2, 1.0);
    Image ref = constant_image(1, 1, 1, 2.0);
    Image same = scg_update(ones, ref, 0.0, pool);
    for (size_t i = 0; i < same.v.size(); ++i)
        CHECK(same.v[i] == ones.v[i]);
    Image up = scg_update(ones, ref, 0.5, pool);
    for (size_t i = 0; i < up.v.size(); ++i)
        CHECK(up.v[i] == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("scg_update: gradient matches central finite differences") {
    BicubicResampler bic;
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Image x = test::random_image(1, 8, 8, 1000 + trial);
        Image ref = test::random_image(1, 4, 4, 2000 + trial);
        // recover the analytic gradient from the update at zeta=1
        Image upd = scg_update(x, ref, 1.0, bic);
        const double h = 1e-6;
        for (int probe = 0; probe < 6; ++probe) {
            const size_t i = rng.next_u64() % x.v.size();
            Image xp = x, xm = x;
            xp.v[i] += h;
            xm.v[i] -= h;
            const double fd = (scg_loss(xp, ref, bic) - scg_loss(xm, ref, bic)) / (2.0 * h);
            const double analytic = x.v[i] - upd.v[i];  // zeta * grad with zeta = 1
            CHECK(analytic == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("scg_update: small steps never increase the loss") {
    BicubicResampler bic;
    for (int trial = 0; trial < 100; ++trial) {
        Image x = test::random_image(3, 10, 10, 5000 + trial);
        Image ref = test::random_image(3, 5, 5, 6000 + trial);
        const double before = scg_loss(x, ref, bic);
        const double after = scg_loss(scg_update(x, ref, 1e-3, bic), ref, bic);
        CHECK(after <= before);
    }
}

TEST_CASE("diffusion ops: shape and range validation") {
    auto s = DiffusionSchedule::build(15, 2.0, 1e-3, 0.999);
    Image a({3, 4, 4}), b({3, 4, 5}), n({3, 4, 4});
    CHECK_THROWS_AS(forward_marginal(a, b, 3, s, n), Error);
    CHECK_THROWS_AS(forward_marginal(a, a, 0, s, n), Error);
    CHECK_THROWS_AS(forward_marginal(a, a, 16, s, n), Error);
    CHECK_THROWS_AS(reverse_step(a, b, 3, s, n), Error);
    CHECK_THROWS_AS(scg_update(a, a, -0.5, BicubicResampler{}), Error);
}
