#include "core/base_sr.hpp"

#include <cmath>

#include "core/adam.hpp"
#include "core/denoiser.hpp"
#include "core/metrics.hpp"
#include "core/resize.hpp"

namespace casr {

using nn::Var;

namespace {

TensorF kaiming_uniform(const std::vector<int>& shape, int fan_in, Rng& rng) {
    TensorF t(shape);
    const double bound = std::sqrt(1.0 / fan_in);
    for (float& v : t.v)
        v = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

// decoder input: encoder features + fourier coords + cell size + bicubic image
int decoder_in_channels(const BaseSRModel& m) { return m.channels + 4 * m.fourier_bands + 2 + 3; }

Var forward_learned(const BaseSRModel& m, const TensorF& lr_img, int th, int tw) {
    auto p = [&](const std::string& name) -> const Var& {
        auto it = m.tensors.find(name);
        require(it != m.tensors.end(), ErrorCode::runtime, "base model: missing tensor " + name);
        return it->second;
    };
    Var x = nn::constant(lr_img);
    Var e = nn::conv2d(x, p("conv_in.w"), p("conv_in.b"), 1);
    for (int k = 0; k < m.blocks; ++k) {
        const std::string rb = "rb" + std::to_string(k);
        Var t = nn::conv2d(nn::silu(nn::conv2d(e, p(rb + ".conv1.w"), p(rb + ".conv1.b"), 1)),
                           p(rb + ".conv2.w"), p(rb + ".conv2.b"), 1);
        e = nn::add(e, t);
    }
    Var feat_up = nn::resize_bicubic_op(e, th, tw);
    Var bic = nn::resize_bicubic_op(x, th, tw);

    const CoordinateMap cmap = make_coordinate_map(th, tw);
    Image four = fourier_encode(cmap, m.fourier_bands);
    TensorF cond({1, 4 * m.fourier_bands + 2, th, tw});
    std::copy(four.v.begin(), four.v.end(), cond.v.begin());
    const size_t plane = static_cast<size_t>(th) * tw;
    std::fill_n(cond.v.begin() + static_cast<size_t>(4 * m.fourier_bands) * plane, plane,
                static_cast<float>(cmap.cell_h));
    std::fill_n(cond.v.begin() + static_cast<size_t>(4 * m.fourier_bands + 1) * plane, plane,
                static_cast<float>(cmap.cell_w));

    Var d = nn::concat_ch({feat_up, nn::constant(std::move(cond)), bic});
    d = nn::silu(nn::conv2d(d, p("dec1.w"), p("dec1.b"), 0));
    d = nn::conv2d(d, p("dec2.w"), p("dec2.b"), 0);
    return nn::add(bic, d);
}

}  // namespace

BaseSRModel BaseSRModel::learned_init(int channels, int blocks, int fourier_bands, Rng& rng) {
    require(channels >= 4 && blocks >= 1 && fourier_bands >= 1, ErrorCode::config,
            "base model: bad learned-mode configuration");
    BaseSRModel m;
    m.mode = Mode::learned;
    m.channels = channels;
    m.blocks = blocks;
    m.fourier_bands = fourier_bands;
    auto add_conv = [&](const std::string& name, int f, int c, int k) {
        m.tensors.emplace(name + ".w", nn::leaf(kaiming_uniform({f, c, k, k}, c * k * k, rng)));
        m.tensors.emplace(name + ".b", nn::leaf(TensorF({f})));
    };
    add_conv("conv_in", channels, 3, 3);
    for (int k = 0; k < blocks; ++k) {
        add_conv("rb" + std::to_string(k) + ".conv1", channels, channels, 3);
        add_conv("rb" + std::to_string(k) + ".conv2", channels, channels, 3);
    }
    add_conv("dec1", channels, decoder_in_channels(m), 1);
    add_conv("dec2", 3, channels, 1);
    return m;
}

Image base_upsample(const Image& x_init, int target_h, int target_w, const BaseSRModel& model) {
    require(x_init.ndim() == 3 && x_init.channels() == 3, ErrorCode::invalid_argument,
            "base_upsample: expected [3,H,W] image");
    require(target_h >= x_init.height() && target_w >= x_init.width(), ErrorCode::invalid_argument,
            "base_upsample: target smaller than input");
    if (model.mode == BaseSRModel::Mode::bicubic)
        return resize_bicubic(x_init, target_h, target_w);
    require(!model.tensors.empty(), ErrorCode::invalid_argument,
            "base_upsample: learned mode without parameters");
    nn::NoGradGuard ng;
    TensorF in({1, 3, x_init.height(), x_init.width()});
    for (size_t i = 0; i < in.v.size(); ++i)
        in.v[i] = static_cast<float>(x_init.v[i]);
    Var out = forward_learned(model, in, target_h, target_w);
    return to_double(out->value);
}

BaseSRModel pretrain_base(const Dataset& data, const PretrainOptions& opt, PretrainReport* report) {
    require(data.size() >= 4, ErrorCode::config, "pretrain_base: insufficient data");
    Rng rng(mix64(opt.seed, 0xBA5EULL));
    BaseSRModel model = BaseSRModel::learned_init(opt.channels, opt.blocks, opt.fourier_bands, rng);

    const size_t n_val = std::max<size_t>(1, static_cast<size_t>(opt.val_fraction * data.size()));
    const size_t n_train = data.size() - n_val;
    require(n_train >= 1, ErrorCode::config, "pretrain_base: insufficient data after split");

    Adam adam;
    double loss_val = 0.0;
    for (int step = 0; step < opt.steps; ++step) {
        Rng srng(mix64(opt.seed, static_cast<uint64_t>(step), 0x11ULL));
        for (auto& [name, var] : model.tensors)
            nn::zero_grad(var);
        // accumulate gradients over the batch, one pair at a time
        double batch_loss = 0.0;
        for (int b = 0; b < opt.batch; ++b) {
            const Image gt = data.load(static_cast<size_t>(srng.uniform_int(0, static_cast<int>(n_train) - 1)));
            const int lh = static_cast<int>(std::llround(gt.height() / opt.scale));
            const int lw = static_cast<int>(std::llround(gt.width() / opt.scale));
            const Image lr = resize_bicubic(gt, lh, lw);
            TensorF lrf({1, 3, lh, lw});
            for (size_t i = 0; i < lrf.v.size(); ++i)
                lrf.v[i] = static_cast<float>(lr.v[i]);
            Var pred = forward_learned(model, lrf, gt.height(), gt.width());
            TensorF gtf({1, 3, gt.height(), gt.width()});
            for (size_t i = 0; i < gtf.v.size(); ++i)
                gtf.v[i] = static_cast<float>(gt.v[i]);
            Var loss = nn::mean_abs(nn::sub(pred, nn::constant(std::move(gtf))));
            nn::backward(loss);
            batch_loss += loss->value.v[0];
        }
        loss_val = batch_loss / opt.batch;
        require(std::isfinite(loss_val), ErrorCode::runtime,
                "pretrain_base: non-finite loss at step " + std::to_string(step));
        adam.step(model.tensors, opt.lr);
    }

    // held-out comparison against the bicubic baseline
    double psnr_model = 0.0, psnr_bicubic = 0.0;
    for (size_t i = n_train; i < data.size(); ++i) {
        const Image gt = data.load(i);
        const int lh = static_cast<int>(std::llround(gt.height() / opt.scale));
        const int lw = static_cast<int>(std::llround(gt.width() / opt.scale));
        const Image lr = resize_bicubic(gt, lh, lw);
        psnr_model += psnr(base_upsample(lr, gt.height(), gt.width(), model), gt, 2.0);
        psnr_bicubic += psnr(resize_bicubic(lr, gt.height(), gt.width()), gt, 2.0);
    }
    psnr_model /= static_cast<double>(n_val);
    psnr_bicubic /= static_cast<double>(n_val);
    if (report) {
        report->val_psnr_model = psnr_model;
        report->val_psnr_bicubic = psnr_bicubic;
        report->final_loss = loss_val;
    }
    require(psnr_model >= psnr_bicubic + 0.2, ErrorCode::runtime,
            "pretrain_base: learned model does not beat bicubic by 0.2 dB (got " +
                std::to_string(psnr_model) + " vs " + std::to_string(psnr_bicubic) + ")");
    return model;
}

}  // namespace casr
