#include "core/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/checkpoint.hpp"
#include "core/diffusion.hpp"
#include "core/resize.hpp"

namespace fs = std::filesystem;

namespace casr {

TrainSample make_train_sample(const Image& x_gt, const ScaleDistribution& dist, int n_stage_max,
                              int crop, Rng& rng) {
    require(n_stage_max >= 1, ErrorCode::invalid_argument, "make_train_sample: bad stage count");
    require(crop >= 16, ErrorCode::invalid_argument, "make_train_sample: crop must be >= 16");
    require(x_gt.height() >= crop && x_gt.width() >= crop, ErrorCode::invalid_argument,
            "make_train_sample: ground truth too small for the requested crop");

    TrainSample s;
    s.stage = rng.uniform_int(1, n_stage_max);
    s.scale = sample_train_scale(dist, rng);

    const int y0 = x_gt.height() == crop ? 0 : rng.uniform_int(0, x_gt.height() - crop);
    const int x0 = x_gt.width() == crop ? 0 : rng.uniform_int(0, x_gt.width() - crop);
    s.x_hr = Image({3, crop, crop});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
                s.x_hr.at3(c, y, x) = x_gt.at3(c, y0 + y, x0 + x);

    const int in_res = static_cast<int>(std::llround(crop / s.scale));
    const double chain = s.scale * std::pow(dist.fixed_scale, s.stage - 1);
    const int init_res = static_cast<int>(std::llround(crop / chain));
    require(init_res >= 4, ErrorCode::invalid_argument,
            "make_train_sample: ground truth too small for stage " + std::to_string(s.stage));

    const Image x_lr = resize_bicubic(s.x_hr, in_res, in_res);
    s.x_lr_up = resize_bicubic(x_lr, crop, crop);
    s.x_init = s.stage == 1 ? x_lr : resize_bicubic(s.x_hr, init_res, init_res);
    s.cmap = make_coordinate_map(crop, crop);
    return s;
}

Image noise_augment(const Image& x_lr_up, int k_steps, const DiffusionSchedule& sched, Rng& rng) {
    require(k_steps >= 0 && k_steps < sched.n_steps(), ErrorCode::invalid_argument,
            "noise_augment: k out of range [0, T)");
    if (k_steps == 0)
        return x_lr_up;
    const double sigma = sched.kappa() * std::sqrt(sched.eta(k_steps));
    Image out = x_lr_up;
    for (double& v : out.v)
        v += sigma * rng.normal();
    return out;
}

TrainerContext::TrainerContext(DenoiserParams p, DiffusionSchedule s, BaseSRModel b, RunConfig c)
    : params(std::move(p)), sched(std::move(s)), base(std::move(b)), config(std::move(c)) {
    adam.beta1 = config.real("train.adam_beta1");
    adam.beta2 = config.real("train.adam_beta2");
    adam.eps = config.real("train.adam_eps");
    seed = static_cast<uint64_t>(config.integer("train.seed"));
}

double TrainerContext::learning_rate() const {
    const int64_t steps = config.integer("train.steps");
    int64_t drop = config.integer("train.lr_drop_step");
    if (drop <= 0)
        drop = steps / 2;
    return step < drop ? config.real("train.lr") : config.real("train.lr_low");
}

double train_step(TrainerContext& ctx, const std::vector<TrainSample>& batch, TrainProbe* probe) {
    require(!batch.empty(), ErrorCode::invalid_argument, "train_step: empty batch");
    const int n = static_cast<int>(batch.size());
    const int res = batch[0].x_hr.height();
    for (const auto& s : batch)
        require(s.x_hr.height() == res && s.x_hr.width() == res, ErrorCode::invalid_argument,
                "train_step: batch mixes output resolutions");
    require(ctx.params.all_finite(), ErrorCode::runtime, "train_step: non-finite parameters");

    const int k_aug = ctx.config.integer("train.noise_aug_steps");
    const size_t plane = static_cast<size_t>(3) * res * res;

    DenoiserInputs in;
    in.x_t = TensorF({n, 3, res, res});
    in.lr_res = TensorF({n, 3, res, res});
    in.init_up = TensorF({n, 3, res, res});
    in.coord_feat = to_float(fourier_encode(batch[0].cmap, ctx.params.config.n_fourier_bands));
    in.t.resize(static_cast<size_t>(n));
    in.s.resize(static_cast<size_t>(n));
    TensorF target({n, 3, res, res});

    for (int i = 0; i < n; ++i) {
        const TrainSample& s = batch[static_cast<size_t>(i)];
        Rng rng(mix64(ctx.seed, static_cast<uint64_t>(ctx.step), static_cast<uint64_t>(i), 0x7EA1ULL));

        const Image g_render = base_upsample(s.x_init, res, res, ctx.base);
        const Image init_up = resize_bicubic(s.x_init, res, res);
        const Image lr_aug = noise_augment(s.x_lr_up, k_aug, ctx.sched, rng);

        Image hr_res = s.x_hr;
        Image lr_res = lr_aug;
        for (size_t p = 0; p < hr_res.v.size(); ++p) {
            hr_res.v[p] -= g_render.v[p];
            lr_res.v[p] -= g_render.v[p];
        }

        const int t = rng.uniform_int(1, ctx.sched.n_steps());
        const Image eps = gaussian_image(3, res, res, rng);
        const Image x_t = forward_marginal(hr_res, lr_res, t, ctx.sched, eps);

        for (size_t p = 0; p < plane; ++p) {
            in.x_t.v[static_cast<size_t>(i) * plane + p] = static_cast<float>(x_t.v[p]);
            in.lr_res.v[static_cast<size_t>(i) * plane + p] = static_cast<float>(lr_res.v[p]);
            in.init_up.v[static_cast<size_t>(i) * plane + p] = static_cast<float>(init_up.v[p]);
            target.v[static_cast<size_t>(i) * plane + p] = static_cast<float>(hr_res.v[p]);
        }
        in.t[static_cast<size_t>(i)] = t;
        in.s[static_cast<size_t>(i)] = s.scale;
        if (probe)
            probe->t_values.push_back(t);
    }

    if (probe) {
        probe->target_residual = target;
        probe->conditioning_residual = in.lr_res;
    }

    for (auto& [name, var] : ctx.params.tensors)
        nn::zero_grad(var);

    nn::Var pred = denoiser_forward(ctx.params, in);
    if (probe && probe->mutate_prediction)
        probe->mutate_prediction(pred->value, target);
    nn::Var loss = nn::mean_abs(nn::sub(pred, nn::constant(std::move(target))));
    const double loss_val = loss->value.v[0];

    if (!std::isfinite(loss_val)) {
        double gn = 0.0;
        for (const auto& [name, var] : ctx.params.tensors)
            for (float g : var->grad.v)
                gn += static_cast<double>(g) * g;
        fail(ErrorCode::runtime, "train_step: non-finite loss at step " + std::to_string(ctx.step) +
                                     " (lr " + std::to_string(ctx.learning_rate()) + ", grad-norm " +
                                     std::to_string(std::sqrt(gn)) + ")");
    }

    nn::backward(loss);
    ctx.adam.step(ctx.params.tensors, ctx.learning_rate());
    ++ctx.step;
    return loss_val;
}

void split_dataset(const Dataset& all, double val_fraction, Dataset& train, Dataset& val) {
    const size_t n_val = std::min(all.size() - 1, std::max<size_t>(1, static_cast<size_t>(val_fraction * all.size())));
    train.items.assign(all.items.begin(), all.items.end() - static_cast<long>(n_val));
    val.items.assign(all.items.end() - static_cast<long>(n_val), all.items.end());
    train.seed = all.seed;
    val.seed = all.seed;
}

namespace {

DenoiserConfig model_config(const RunConfig& cfg) {
    DenoiserConfig m;
    m.base_channels = cfg.integer("model.base_channels");
    m.channel_multipliers = cfg.int_list("model.channel_multipliers");
    m.n_res_blocks = cfg.integer("model.n_res_blocks");
    m.embed_dim = cfg.integer("model.embed_dim");
    m.n_fourier_bands = cfg.integer("model.fourier_bands");
    m.encoder_channels = cfg.integer("model.encoder_channels");
    m.validate();
    return m;
}

DiffusionSchedule schedule_from_config(const RunConfig& cfg) {
    return DiffusionSchedule::build(cfg.integer("schedule.steps"), cfg.real("schedule.kappa"),
                                    cfg.real("schedule.eta_min"), cfg.real("schedule.eta_max"));
}

BaseSRModel base_from_config(const RunConfig& cfg, const Dataset& train, const std::string& out_dir) {
    if (cfg.str("base.mode") == "bicubic")
        return BaseSRModel::bicubic();
    require(cfg.str("base.mode") == "learned", ErrorCode::config,
            "base.mode must be 'bicubic' or 'learned'");
    const std::string ckpt = cfg.str("base.checkpoint");
    if (!ckpt.empty() && fs::exists(ckpt))
        return load_base_checkpoint(ckpt);
    PretrainOptions opt;
    opt.steps = cfg.integer("base.steps");
    opt.batch = cfg.integer("base.batch");
    opt.lr = cfg.real("base.lr");
    opt.seed = static_cast<uint64_t>(cfg.integer("train.seed"));
    opt.channels = cfg.integer("base.channels");
    opt.blocks = cfg.integer("base.blocks");
    opt.fourier_bands = cfg.integer("base.fourier_bands");
    opt.val_fraction = cfg.real("data.val_fraction");
    BaseSRModel model = pretrain_base(train, opt);
    const std::string path = ckpt.empty() ? (fs::path(out_dir) / "base.casr").string() : ckpt;
    save_base_checkpoint(path, model);
    return model;
}

int stage_count_from_config(const RunConfig& cfg) {
    if (cfg.boolean("train.single_stage"))
        return 1;
    const double s_max = cfg.real("train.s_max");
    const double s_fix = cfg.real("plan.s_fix");
    return std::max(1, static_cast<int>(std::ceil(std::log(s_max) / std::log(s_fix) - 1e-12)));
}

ScaleDistribution dist_from_config(const RunConfig& cfg) {
    // single-stage ablation: one stage covering the whole range up to s_max
    const double s_fix = cfg.boolean("train.single_stage") ? cfg.real("train.s_max")
                                                           : cfg.real("plan.s_fix");
    return ScaleDistribution(cfg.real("train.scale_p"), s_fix);
}

}  // namespace

TrainResult run_training(const RunConfig& config, const std::string& out_dir,
                         const std::string& resume_path) {
    fs::create_directories(out_dir);
    config.write((fs::path(out_dir) / "config.resolved.cfg").string());

    // dataset
    Dataset all;
    if (!config.str("data.path").empty()) {
        all = Dataset::from_folder(config.str("data.path"));
    } else {
        const int n = config.integer("data.synthetic_n");
        require(n > 0, ErrorCode::config, "training needs data.path or data.synthetic_n > 0");
        all = make_synthetic_dataset(n, config.integer("data.size"), config.integer("data.size"),
                                     static_cast<uint64_t>(config.integer("train.seed")),
                                     (fs::path(out_dir) / "synth_data").string());
    }
    require(all.size() >= 2, ErrorCode::config, "dataset is empty or too small");
    Dataset train, val;
    split_dataset(all, config.real("data.val_fraction"), train, val);

    DiffusionSchedule sched = schedule_from_config(config);
    BaseSRModel base = base_from_config(config, train, out_dir);

    Rng init_rng(mix64(static_cast<uint64_t>(config.integer("train.seed")), 0x1217ULL));
    TrainerContext ctx(init_params(model_config(config), init_rng), sched, base, config);

    if (!resume_path.empty()) {
        LoadedModel resumed = load_denoiser_model(resume_path);
        require(resumed.params.config.base_channels == ctx.params.config.base_channels &&
                    resumed.params.tensors.size() == ctx.params.tensors.size(),
                ErrorCode::config, "resume: checkpoint does not match the configured model");
        ctx.params = std::move(resumed.params);
        ctx.adam = std::move(resumed.adam);
        ctx.adam.beta1 = config.real("train.adam_beta1");
        ctx.adam.beta2 = config.real("train.adam_beta2");
        ctx.adam.eps = config.real("train.adam_eps");
        ctx.step = resumed.step;
        ctx.sched = resumed.sched;
    }

    const int64_t total_steps = config.integer("train.steps");
    const int batch_size = config.integer("train.batch_size");
    const int crop = config.integer("data.crop");
    const int overfit_n = config.integer("train.overfit_n");
    const int n_stage_max = stage_count_from_config(config);
    const ScaleDistribution dist = dist_from_config(config);
    const int ckpt_every = config.integer("train.checkpoint_every");
    const int log_every = std::max(1, config.integer("train.log_every"));

    // overfit mode trains on one fixed batch built from the first N items
    std::vector<TrainSample> fixed_batch;
    if (overfit_n > 0) {
        require(static_cast<size_t>(overfit_n) <= train.size(), ErrorCode::config,
                "train.overfit_n exceeds the training split");
        for (int i = 0; i < overfit_n; ++i) {
            Rng rng(mix64(ctx.seed, static_cast<uint64_t>(i), 0x0F17ULL));
            fixed_batch.push_back(make_train_sample(train.load(static_cast<size_t>(i)), dist,
                                                    n_stage_max, crop, rng));
        }
    }

    TrainResult result;
    result.log_path = (fs::path(out_dir) / "train_log.csv").string();
    std::ofstream log(result.log_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
    require(log.good(), ErrorCode::io, "cannot write training log");
    if (resume_path.empty())
        log << "step,loss,lr,wallclock_s\n";
    const auto t0 = std::chrono::steady_clock::now();

    while (ctx.step < total_steps) {
        std::vector<TrainSample> batch;
        if (overfit_n > 0) {
            batch = fixed_batch;
        } else {
            batch.reserve(static_cast<size_t>(batch_size));
            for (int i = 0; i < batch_size; ++i) {
                Rng rng(mix64(ctx.seed, static_cast<uint64_t>(ctx.step), static_cast<uint64_t>(i), 0x5A3DULL));
                const size_t idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1));
                batch.push_back(make_train_sample(train.load(idx), dist, n_stage_max, crop, rng));
            }
        }

        const double lr = ctx.learning_rate();
        const int64_t logged_step = ctx.step;
        const double loss = train_step(ctx, batch);
        result.losses.push_back(loss);

        if (logged_step % log_every == 0 || ctx.step == total_steps) {
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log << logged_step << "," << loss << "," << lr << "," << wall << "\n";
            log.flush();
        }
        if (ckpt_every > 0 && ctx.step % ckpt_every == 0 && ctx.step < total_steps)
            save_denoiser_checkpoint((fs::path(out_dir) / ("ckpt_" + std::to_string(ctx.step) + ".casr")).string(), ctx);
    }

    result.checkpoint_path = (fs::path(out_dir) / "model.casr").string();
    save_denoiser_checkpoint(result.checkpoint_path, ctx);
    result.steps = ctx.step;
    return result;
}

void save_denoiser_checkpoint(const std::string& path, const TrainerContext& ctx) {
    CheckpointBundle b;
    b.kind = "denoiser";
    b.config = ctx.config.entries();
    b.schedule_eta = ctx.sched.eta_values();
    b.schedule_kappa = ctx.sched.kappa();
    b.step = ctx.step;
    b.seed = ctx.seed;
    for (const auto& [name, var] : ctx.params.tensors)
        b.tensors.emplace(name, var->value);
    for (const auto& [name, t] : ctx.adam.m)
        b.tensors.emplace("adam.m." + name, t);
    for (const auto& [name, t] : ctx.adam.v)
        b.tensors.emplace("adam.v." + name, t);
    b.tensors.emplace("adam.t", [&] {
        TensorF t({1});
        t.v[0] = static_cast<float>(ctx.adam.t);
        return t;
    }());
    save_checkpoint(path, b);
}

LoadedModel::LoadedModel(DenoiserParams p, DiffusionSchedule s, BaseSRModel b, RunConfig c)
    : params(std::move(p)), sched(std::move(s)), base(std::move(b)), config(std::move(c)) {}

LoadedModel load_denoiser_model(const std::string& path) {
    CheckpointBundle b = load_checkpoint(path);
    require(b.kind == "denoiser", ErrorCode::config, "not a denoiser checkpoint: " + path);
    RunConfig config = RunConfig::from_map(b.config);

    DenoiserConfig mc = model_config(config);
    DenoiserParams params;
    params.config = mc;
    Adam adam;
    adam.beta1 = config.real("train.adam_beta1");
    adam.beta2 = config.real("train.adam_beta2");
    adam.eps = config.real("train.adam_eps");
    for (auto& [name, t] : b.tensors) {
        if (name.rfind("adam.m.", 0) == 0)
            adam.m.emplace(name.substr(7), t);
        else if (name.rfind("adam.v.", 0) == 0)
            adam.v.emplace(name.substr(7), t);
        else if (name == "adam.t")
            adam.t = static_cast<int64_t>(t.v[0]);
        else
            params.tensors.emplace(name, nn::leaf(t));
    }
    require(params.all_finite(), ErrorCode::runtime, "checkpoint contains non-finite parameters");

    BaseSRModel base = BaseSRModel::bicubic();
    if (config.str("base.mode") == "learned") {
        fs::path bp = config.str("base.checkpoint");
        if (bp.empty())
            bp = fs::path(path).parent_path() / "base.casr";
        else if (bp.is_relative() && !fs::exists(bp))
            bp = fs::path(path).parent_path() / bp;
        base = load_base_checkpoint(bp.string());
    }

    LoadedModel m(std::move(params), b.schedule(), std::move(base), std::move(config));
    m.step = b.step;
    m.seed = b.seed;
    m.adam = std::move(adam);
    return m;
}

void save_base_checkpoint(const std::string& path, const BaseSRModel& model) {
    require(model.mode == BaseSRModel::Mode::learned, ErrorCode::invalid_argument,
            "only learned base models are checkpointed");
    CheckpointBundle b;
    b.kind = "base_sr";
    b.config["base.channels"] = std::to_string(model.channels);
    b.config["base.blocks"] = std::to_string(model.blocks);
    b.config["base.fourier_bands"] = std::to_string(model.fourier_bands);
    for (const auto& [name, var] : model.tensors)
        b.tensors.emplace(name, var->value);
    save_checkpoint(path, b);
}

BaseSRModel load_base_checkpoint(const std::string& path) {
    CheckpointBundle b = load_checkpoint(path);
    require(b.kind == "base_sr", ErrorCode::config, "not a base-model checkpoint: " + path);
    BaseSRModel m;
    m.mode = BaseSRModel::Mode::learned;
    m.channels = std::stoi(b.config.at("base.channels"));
    m.blocks = std::stoi(b.config.at("base.blocks"));
    m.fourier_bands = std::stoi(b.config.at("base.fourier_bands"));
    for (auto& [name, t] : b.tensors)
        m.tensors.emplace(name, nn::leaf(t));
    return m;
}

}  // namespace casr
