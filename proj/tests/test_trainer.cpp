#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "core/diffusion.hpp"
#include "core/resize.hpp"
#include "core/trainer.hpp"
#include "test_util.hpp"

using namespace casr;

namespace {

RunConfig tiny_train_config(const std::string& data_dir, int steps) {
    RunConfig cfg;
    cfg.set("model.base_channels", "8");
    cfg.set("model.embed_dim", "16");
    cfg.set("model.fourier_bands", "2");
    cfg.set("model.encoder_channels", "4");
    cfg.set("schedule.steps", "4");
    cfg.set("data.path", data_dir);
    cfg.set("data.crop", "16");
    cfg.set("train.s_max", "2");
    cfg.set("train.steps", std::to_string(steps));
    cfg.set("train.batch_size", "2");
    cfg.set("train.lr", "1e-3");
    cfg.set("train.noise_aug_steps", "1");
    cfg.set("train.checkpoint_every", "0");
    cfg.set("train.log_every", "1");
    return cfg;
}

TrainerContext make_ctx(const RunConfig& cfg) {
    DenoiserConfig mc;
    mc.base_channels = cfg.integer("model.base_channels");
    mc.channel_multipliers = cfg.int_list("model.channel_multipliers");
    mc.embed_dim = cfg.integer("model.embed_dim");
    mc.n_fourier_bands = cfg.integer("model.fourier_bands");
    mc.encoder_channels = cfg.integer("model.encoder_channels");
    Rng rng(1);
    return TrainerContext(init_params(mc, rng),
                          DiffusionSchedule::build(cfg.integer("schedule.steps"), 2.0, 1e-3, 0.999),
                          BaseSRModel::bicubic(), cfg);
}

}  // namespace

TEST_CASE("make_train_sample: stage-1 conditioning is the initial LR") {
    Image gt = test::random_image(3, 64, 64, 1);
    ScaleDistribution dist(1.0, 2.0);  // always the fixed scale
    Rng rng(2);
    for (int k = 0; k < 8; ++k) {
        TrainSample s = make_train_sample(gt, dist, 1, 48, rng);
        CHECK(s.stage == 1);
        CHECK(s.x_init.shape == std::vector<int>{3, 24, 24});
        CHECK(s.x_init.height() == static_cast<int>(std::llround(48 / s.scale)));
    }
}

TEST_CASE("make_train_sample: LR derived at in-res then upsampled to the output res") {
    Image gt = test::random_image(3, 64, 64, 3);
    ScaleDistribution dist(1.0, 2.0);
    Rng rng(4);
    TrainSample s = make_train_sample(gt, dist, 2, 64, rng);
    REQUIRE(s.scale == 2.0);
    CHECK(s.x_hr.shape == std::vector<int>{3, 64, 64});
    CHECK(s.x_lr_up.shape == std::vector<int>{3, 64, 64});
    Image expect = resize_bicubic(resize_bicubic(s.x_hr, 32, 32), 64, 64);
    CHECK(s.x_lr_up.v == expect.v);
    CHECK(s.cmap.height() == 64);
}

TEST_CASE("make_train_sample: stages are uniform over {1..n}") {
    Image gt = test::random_image(3, 64, 64, 5);
    ScaleDistribution dist(0.5, 2.0);
    Rng rng(6);
    int counts[3] = {0, 0, 0};
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        TrainSample s = make_train_sample(gt, dist, 3, 32, rng);
        ++counts[s.stage - 1];
    }
    for (int c : counts)
        CHECK(std::fabs(static_cast<double>(c) / n - 1.0 / 3.0) < 0.02);
}

TEST_CASE("make_train_sample: rejects ground truth that is too small") {
    Image gt = test::random_image(3, 24, 24, 7);
    ScaleDistribution dist(1.0, 2.0);
    Rng rng(8);
    CHECK_THROWS_AS(make_train_sample(gt, dist, 3, 48, rng), Error);   // crop larger than gt
    CHECK_THROWS_AS(make_train_sample(gt, dist, 4, 16, rng), Error);   // init resolution collapses
}

TEST_CASE("noise_augment: k=0 identity, k=3 and k=5 variance") {
    auto sched = DiffusionSchedule::build(15, 2.0, 1e-3, 0.999);
    Image x = test::random_image(3, 8, 8, 9);
    Rng rng(10);
    Image same = noise_augment(x, 0, sched, rng);
    CHECK(same.v == x.v);
    CHECK_THROWS_AS(noise_augment(x, 15, sched, rng), Error);
    CHECK_THROWS_AS(noise_augment(x, -1, sched, rng), Error);

    Image px({1, 1, 1}, 0.3);
    for (int k : {3, 5}) {
        double sum = 0.0, sumsq = 0.0;
        const int n = 100000;
        Rng r(1000 + k);
        for (int i = 0; i < n; ++i) {
            const double v = noise_augment(px, k, sched, r).v[0];
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        const double expect = sched.kappa() * sched.kappa() * sched.eta(k);
        CHECK(std::fabs(var - expect) < 0.02 * expect);
    }
}

TEST_CASE("train_step: oracle prediction gives exactly zero loss") {
    const std::string dir = test::scratch_dir("train_oracle");
    make_synthetic_dataset(4, 32, 32, 11, dir);
    RunConfig cfg = tiny_train_config(dir, 1);
    TrainerContext ctx = make_ctx(cfg);
    Dataset ds = Dataset::from_folder(dir);

    ScaleDistribution dist(0.5, 2.0);
    Rng rng(12);
    std::vector<TrainSample> batch;
    for (int i = 0; i < 2; ++i)
        batch.push_back(make_train_sample(ds.load(i), dist, 1, 16, rng));

    TrainProbe probe;
    probe.mutate_prediction = [](TensorF& pred, const TensorF& target) { pred = target; };
    const double loss = train_step(ctx, batch, &probe);
    CHECK(loss == 0.0);

    // and an unmutated step has a non-negative loss
    TrainerContext ctx2 = make_ctx(cfg);
    const double loss2 = train_step(ctx2, batch);
    CHECK(loss2 >= 0.0);
}

TEST_CASE("train_step: augmentation reaches only the conditioning, never the target") {
    const std::string dir = test::scratch_dir("train_aug");
    make_synthetic_dataset(4, 32, 32, 13, dir);
    RunConfig cfg = tiny_train_config(dir, 1);
    cfg.set("train.noise_aug_steps", "3");
    cfg.set("schedule.steps", "8");
    TrainerContext ctx = make_ctx(cfg);
    Dataset ds = Dataset::from_folder(dir);

    ScaleDistribution dist(0.5, 2.0);
    Rng rng(14);
    std::vector<TrainSample> batch{make_train_sample(ds.load(0), dist, 1, 16, rng)};

    TrainProbe probe;
    train_step(ctx, batch, &probe);

    // the target entering the loss equals the clean residual, bit for bit
    const TrainSample& s = batch[0];
    const Image g = base_upsample(s.x_init, 16, 16, ctx.base);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                CHECK(probe.target_residual.at4(0, c, y, x) ==
                      static_cast<float>(s.x_hr.at3(c, y, x) - g.at3(c, y, x)));

    // while the conditioning residual differs from its clean version (noise added)
    double diff = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                diff += std::fabs(probe.conditioning_residual.at4(0, c, y, x) -
                                  (s.x_lr_up.at3(c, y, x) - g.at3(c, y, x)));
    CHECK(diff > 0.0);
}

TEST_CASE("learning-rate schedule: single drop at the midpoint") {
    RunConfig cfg = tiny_train_config("", 100);
    TrainerContext ctx = make_ctx(cfg);
    ctx.step = 0;
    CHECK(ctx.learning_rate() == 1e-3);
    ctx.step = 49;
    CHECK(ctx.learning_rate() == 1e-3);
    ctx.step = 50;
    CHECK(ctx.learning_rate() == 1e-5);
    RunConfig cfg2 = tiny_train_config("", 100);
    cfg2.set("train.lr_drop_step", "80");
    TrainerContext ctx2 = make_ctx(cfg2);
    ctx2.step = 79;
    CHECK(ctx2.learning_rate() == 1e-3);
    ctx2.step = 80;
    CHECK(ctx2.learning_rate() == 1e-5);
}

TEST_CASE("run_training: resume reproduces the uninterrupted run bitwise") {
    const std::string dir = test::scratch_dir("train_resume");
    make_synthetic_dataset(6, 32, 32, 15, dir);

    RunConfig full_cfg = tiny_train_config(dir, 6);
    TrainResult full = run_training(full_cfg, test::scratch_dir("train_resume_full"));
    REQUIRE(full.losses.size() == 6);

    const std::string part_dir = test::scratch_dir("train_resume_part");
    RunConfig part_cfg = tiny_train_config(dir, 3);
    TrainResult part = run_training(part_cfg, part_dir);
    REQUIRE(part.losses.size() == 3);

    RunConfig cont_cfg = tiny_train_config(dir, 6);
    TrainResult cont = run_training(cont_cfg, test::scratch_dir("train_resume_cont"),
                                    part.checkpoint_path);
    REQUIRE(cont.losses.size() == 3);

    for (int i = 0; i < 3; ++i) {
        CHECK(part.losses[static_cast<size_t>(i)] == full.losses[static_cast<size_t>(i)]);
        CHECK(cont.losses[static_cast<size_t>(i)] == full.losses[static_cast<size_t>(i) + 3]);
    }

    LoadedModel a = load_denoiser_model(full.checkpoint_path);
    LoadedModel b = load_denoiser_model(cont.checkpoint_path);
    for (const auto& [name, var] : a.params.tensors)
        CHECK(var->value.v == b.params.tensors.at(name)->value.v);
}

TEST_CASE("run_training: empty dataset and bad config fail with typed errors") {
    RunConfig cfg = tiny_train_config("", 2);
    try {
        run_training(cfg, test::scratch_dir("train_bad"));
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
    }
    RunConfig missing = tiny_train_config("/nonexistent/dataset/path", 2);
    CHECK_THROWS_AS(run_training(missing, test::scratch_dir("train_bad2")), Error);
}

TEST_CASE("run_training: short overfit run trends down") {
    const std::string dir = test::scratch_dir("train_overfit");
    make_synthetic_dataset(6, 32, 32, 17, dir);
    RunConfig cfg = tiny_train_config(dir, 150);
    cfg.set("train.overfit_n", "4");
    cfg.set("train.lr", "2e-3");
    cfg.set("train.lr_drop_step", "150");  // keep the high phase throughout
    TrainResult r = run_training(cfg, test::scratch_dir("train_overfit_out"));
    REQUIRE(r.losses.size() == 150);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
        head += r.losses[static_cast<size_t>(i)];
        tail += r.losses[r.losses.size() - 10 + static_cast<size_t>(i)];
    }
    MESSAGE("overfit head ", head / 10, " tail ", tail / 10);
    CHECK(tail < 0.6 * head);
    CHECK(std::filesystem::exists(r.log_path));
}
