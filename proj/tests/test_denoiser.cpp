#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/denoiser.hpp"
#include "core/nn.hpp"
#include "test_util.hpp"

using namespace casr;
using nn::Var;

namespace {

TensorF random_tensor(const std::vector<int>& shape, uint64_t seed, double lo = -0.5, double hi = 0.5) {
    Rng rng(seed);
    TensorF t(shape);
    for (float& v : t.v)
        v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// directional finite-difference check of d(loss)/d(target tensor)
void check_direction(const std::function<Var()>& loss_fn, const Var& target, uint64_t seed,
                     double tol = 2e-2) {
    nn::zero_grad(target);
    Var loss = loss_fn();
    nn::backward(loss);
    REQUIRE(!target->grad.v.empty());

    Rng rng(seed);
    std::vector<float> dir(target->value.numel());
    for (float& d : dir)
        d = rng.uniform() < 0.5 ? -1.0f : 1.0f;

    double analytic = 0.0;
    for (size_t i = 0; i < dir.size(); ++i)
        analytic += static_cast<double>(target->grad.v[i]) * dir[i];

    const float h = 5e-3f;
    TensorF saved = target->value;
    for (size_t i = 0; i < dir.size(); ++i)
        target->value.v[i] = saved.v[i] + h * dir[i];
    const double lp = loss_fn()->value.v[0];
    for (size_t i = 0; i < dir.size(); ++i)
        target->value.v[i] = saved.v[i] - h * dir[i];
    const double lm = loss_fn()->value.v[0];
    target->value = saved;

    const double fd = (lp - lm) / (2.0 * h);
    CHECK(std::fabs(fd - analytic) <= tol * std::max(1.0, std::fabs(analytic)));
}

DenoiserConfig tiny_config() {
    DenoiserConfig c;
    c.base_channels = 8;
    c.channel_multipliers = {1, 2};
    c.n_fourier_bands = 2;
    c.embed_dim = 16;
    c.n_res_blocks = 1;
    c.encoder_channels = 4;
    return c;
}

DenoiserInputs random_inputs(int n, int h, int w, const DenoiserConfig& cfg, uint64_t seed) {
    DenoiserInputs in;
    in.x_t = random_tensor({n, 3, h, w}, seed);
    in.lr_res = random_tensor({n, 3, h, w}, seed + 1);
    in.init_up = random_tensor({n, 3, h, w}, seed + 2);
    in.coord_feat = to_float(fourier_encode(make_coordinate_map(h, w), cfg.n_fourier_bands));
    for (int i = 0; i < n; ++i) {
        in.t.push_back(1.0 + (seed + i) % 15);
        in.s.push_back(1.0 + 0.09 * ((seed + i) % 11));
    }
    return in;
}

void randomize_params(DenoiserParams& p, uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, var] : p.tensors)
        for (float& v : var->value.v)
            v = static_cast<float>(rng.uniform(-0.25, 0.25));
}

}  // namespace

TEST_CASE("coordinate map: pixel-center formula") {
    auto m = make_coordinate_map(3, 2);
    CHECK(m.coords.at3(0, 0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(m.coords.at3(0, 0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    auto m1 = make_coordinate_map(1, 1);
    CHECK(m1.coords.at3(0, 0, 0) == doctest::Approx(0.0));
    CHECK(m1.coords.at3(1, 0, 0) == doctest::Approx(0.0));
    auto m4 = make_coordinate_map(2, 4);
    CHECK(m4.coords.at3(0, 0, 0) == doctest::Approx(-0.75));
    CHECK(m4.coords.at3(0, 0, 1) == doctest::Approx(-0.25));
    CHECK(m4.coords.at3(0, 0, 2) == doctest::Approx(0.25));
    CHECK(m4.coords.at3(0, 0, 3) == doctest::Approx(0.75));
    CHECK(m4.cell_h == 1.0);
    CHECK(m4.cell_w == 0.5);
    for (double v : m4.coords.v) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
    CHECK_THROWS_AS(make_coordinate_map(0, 4), Error);
}

TEST_CASE("fourier encode: closed-form values and channel count") {
    auto m = make_coordinate_map(2, 2);
    for (int bands = 1; bands <= 6; ++bands) {
        Image f = fourier_encode(m, bands);
        CHECK(f.channels() == 4 * bands);
    }
    // coordinate 0 -> sin 0, cos 1 on both axes
    auto m1 = make_coordinate_map(1, 1);
    Image f = fourier_encode(m1, 3);
    for (int b = 0; b < 3; ++b) {
        CHECK(f.at3(4 * b + 0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(f.at3(4 * b + 1, 0, 0) == doctest::Approx(1.0));
        CHECK(f.at3(4 * b + 2, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(f.at3(4 * b + 3, 0, 0) == doctest::Approx(1.0));
    }
    // coordinate 0.5 at band 0 -> [sin(pi/2), cos(pi/2)] = [1, 0]
    auto m2 = make_coordinate_map(1, 4);  // x centers at -0.75..0.75; use y=0.5? craft directly
    CoordinateMap custom = make_coordinate_map(1, 1);
    custom.coords.at3(0, 0, 0) = 0.5;
    custom.coords.at3(1, 0, 0) = 0.5;
    Image g = fourier_encode(custom, 1);
    CHECK(g.at3(0, 0, 0) == doctest::Approx(1.0));
    CHECK(g.at3(1, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("autograd ops: finite-difference gradients") {
    // conv2d
    {
        Var x = nn::leaf(random_tensor({2, 3, 5, 6}, 1));
        Var w = nn::leaf(random_tensor({4, 3, 3, 3}, 2));
        Var b = nn::leaf(random_tensor({4}, 3));
        auto loss = [&] { return nn::mean_abs(nn::conv2d(x, w, b, 1)); };
        check_direction(loss, x, 11);
        check_direction(loss, w, 12);
        check_direction(loss, b, 13);
    }
    // linear
    {
        Var x = nn::leaf(random_tensor({3, 7}, 4));
        Var w = nn::leaf(random_tensor({5, 7}, 5));
        Var b = nn::leaf(random_tensor({5}, 6));
        auto loss = [&] { return nn::mean_abs(nn::linear(x, w, b)); };
        check_direction(loss, x, 14);
        check_direction(loss, w, 15);
    }
    // group_norm
    {
        Var x = nn::leaf(random_tensor({2, 8, 4, 4}, 7));
        Var g = nn::leaf(random_tensor({8}, 8, 0.5, 1.5));
        Var be = nn::leaf(random_tensor({8}, 9));
        auto loss = [&] { return nn::mean_abs(nn::group_norm(x, 4, g, be)); };
        check_direction(loss, x, 16, 4e-2);
        check_direction(loss, g, 17);
        check_direction(loss, be, 18);
    }
    // silu + film
    {
        Var x = nn::leaf(random_tensor({1, 4, 3, 3}, 10));
        Var ga = nn::leaf(random_tensor({1, 4, 3, 3}, 11));
        Var be = nn::leaf(random_tensor({1, 4, 3, 3}, 12));
        auto loss = [&] { return nn::mean_abs(nn::film(nn::silu(x), ga, be)); };
        check_direction(loss, x, 19);
        check_direction(loss, ga, 20);
        check_direction(loss, be, 21);
    }
    // pooling, upsampling, resize, rowvec, concat/slice
    {
        Var x = nn::leaf(random_tensor({1, 2, 5, 7}, 13));
        Var v = nn::leaf(random_tensor({1, 2}, 14));
        auto loss = [&] {
            Var h = nn::add_rowvec(x, v);
            Var a = nn::avgpool2(h);
            Var b = nn::upsample_to(a, 5, 7);
            Var c = nn::resize_bicubic_op(b, 4, 5);
            Var d = nn::concat_ch({c, nn::scale(c, 0.5f)});
            return nn::mean_abs(nn::slice_ch(d, 1, 3));
        };
        check_direction(loss, x, 22);
        check_direction(loss, v, 23);
    }
}

TEST_CASE("denoiser: shape contract and determinism") {
    auto cfg = tiny_config();
    Rng rng(1);
    auto params = init_params(cfg, rng);
    auto in = random_inputs(2, 32, 32, cfg, 50);
    nn::NoGradGuard ng;
    Var out1 = denoiser_forward(params, in);
    Var out2 = denoiser_forward(params, in);
    CHECK(out1->value.shape == std::vector<int>{2, 3, 32, 32});
    CHECK(out1->value.v == out2->value.v);  // bitwise identical
}

TEST_CASE("denoiser: shape equivariance over resolutions including odd sizes") {
    auto cfg = tiny_config();
    Rng rng(2);
    auto params = init_params(cfg, rng);
    nn::NoGradGuard ng;
    for (auto [h, w] : {std::pair<int, int>{16, 16}, {17, 19}, {23, 16}, {37, 41}, {64, 96}, {129, 131}}) {
        auto in = random_inputs(1, h, w, cfg, 60);
        Var out = denoiser_forward(params, in);
        CHECK(out->value.shape == std::vector<int>{1, 3, h, w});
    }
}

TEST_CASE("denoiser: zero-initialized modulation ignores the coordinate map") {
    auto cfg = tiny_config();
    Rng rng(3);
    auto params = init_params(cfg, rng);  // heads zero-initialized
    auto in = random_inputs(1, 24, 24, cfg, 70);
    nn::NoGradGuard ng;
    Var a = denoiser_forward(params, in);
    auto in_zero = in;
    std::fill(in_zero.coord_feat.v.begin(), in_zero.coord_feat.v.end(), 0.0f);
    Var b = denoiser_forward(params, in_zero);
    CHECK(a->value.v == b->value.v);
    // and the (t, s) conditioning is also routed through the adapter only
    auto in_ts = in;
    in_ts.t[0] = 9.0;
    in_ts.s[0] = 1.7;
    Var c = denoiser_forward(params, in_ts);
    CHECK(a->value.v == c->value.v);
}

TEST_CASE("denoiser: live modulation responds to the scale conditioning") {
    auto cfg = tiny_config();
    Rng rng(4);
    auto params = init_params(cfg, rng);
    randomize_params(params, 99);  // heads nonzero
    auto in = random_inputs(1, 24, 24, cfg, 80);
    in.s[0] = 2.0;
    nn::NoGradGuard ng;
    Var a = denoiser_forward(params, in);
    in.s[0] = 1.2;
    Var b = denoiser_forward(params, in);
    double l2 = 0.0;
    for (size_t i = 0; i < a->value.v.size(); ++i) {
        const double d = a->value.v[i] - b->value.v[i];
        l2 += d * d;
    }
    CHECK(l2 > 0.0);
}

TEST_CASE("denoiser: same seed gives identical parameters, count under budget") {
    DenoiserConfig cfg;  // defaults
    Rng r1(7), r2(7);
    auto p1 = init_params(cfg, r1);
    auto p2 = init_params(cfg, r2);
    REQUIRE(p1.tensors.size() == p2.tensors.size());
    for (const auto& [name, var] : p1.tensors)
        CHECK(var->value.v == p2.at(name)->value.v);
    CHECK(p1.parameter_count() < 5000000);
    MESSAGE("default parameter count: ", p1.parameter_count());
}

TEST_CASE("denoiser: every named parameter receives gradient on a random batch") {
    auto cfg = tiny_config();
    Rng rng(5);
    auto params = init_params(cfg, rng);
    randomize_params(params, 123);  // heads must be live for upstream reachability
    auto in = random_inputs(2, 16, 16, cfg, 90);
    Var pred = denoiser_forward(params, in);
    Var target = nn::constant(random_tensor({2, 3, 16, 16}, 91));
    nn::backward(nn::mean_abs(nn::sub(pred, target)));
    for (const auto& [name, var] : params.tensors) {
        REQUIRE_MESSAGE(!var->grad.v.empty(), name);
        double norm = 0.0;
        for (float g : var->grad.v)
            norm += static_cast<double>(g) * g;
        CHECK_MESSAGE(norm > 0.0, "zero gradient for ", name);
        CHECK_MESSAGE(std::isfinite(norm), "non-finite gradient for ", name);
    }
}

TEST_CASE("denoiser: parameter gradients match finite differences") {
    auto cfg = tiny_config();
    Rng rng(6);
    auto params = init_params(cfg, rng);
    randomize_params(params, 321);
    auto in = random_inputs(1, 16, 16, cfg, 95);
    TensorF target_t = random_tensor({1, 3, 16, 16}, 96);

    auto loss_fn = [&] {
        return nn::mean_abs(nn::sub(denoiser_forward(params, in), nn::constant(target_t)));
    };
    for (const char* name : {"unet.stem.w", "adapter.ec1.w", "embed.l1.w", "enc_lr.conv_in.w",
                             "adapter.head.mid.b0.w", "unet.dec0.b0.conv2.w", "unet.out_norm.g"}) {
        for (auto& [n, var] : params.tensors)
            nn::zero_grad(var);
        check_direction(loss_fn, params.at(name), 500 + std::hash<std::string>{}(name) % 1000, 3e-2);
    }
}

TEST_CASE("denoise: public API validations") {
    auto cfg = tiny_config();
    Rng rng(8);
    auto params = init_params(cfg, rng);
    Image x = test::random_image(3, 16, 16, 1);
    Image other = test::random_image(3, 16, 17, 2);
    auto cmap = make_coordinate_map(16, 16);
    CHECK_THROWS_AS(denoise(x, 1, 2.0, other, x, cmap, params), Error);
    CHECK_THROWS_AS(denoise(x, 0, 2.0, x, x, cmap, params), Error);
    CHECK_THROWS_AS(denoise(x, 1, 0.5, x, x, cmap, params), Error);
    Image out = denoise(x, 3, 1.7, x, x, cmap, params);
    CHECK(out.shape == std::vector<int>{3, 16, 16});
}
