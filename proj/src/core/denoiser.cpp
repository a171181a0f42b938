#include "core/denoiser.hpp"

#include <cmath>

namespace casr {

using nn::Var;

CoordinateMap make_coordinate_map(int h, int w) {
    require(h >= 1 && w >= 1, ErrorCode::invalid_argument, "coordinate map: non-positive dimensions");
    CoordinateMap m;
    m.coords = Image({2, h, w});
    m.cell_h = 2.0 / h;
    m.cell_w = 2.0 / w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            m.coords.at3(0, y, x) = -1.0 + (2.0 * x + 1.0) / w;
            m.coords.at3(1, y, x) = -1.0 + (2.0 * y + 1.0) / h;
        }
    return m;
}

Image fourier_encode(const CoordinateMap& cmap, int n_bands) {
    require(n_bands >= 1, ErrorCode::invalid_argument, "fourier_encode: need at least one band");
    const int h = cmap.height(), w = cmap.width();
    Image out({4 * n_bands, h, w});
    for (int b = 0; b < n_bands; ++b) {
        const double f = std::pow(2.0, b) * M_PI;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double u = cmap.coords.at3(0, y, x);
                const double v = cmap.coords.at3(1, y, x);
                out.at3(4 * b + 0, y, x) = std::sin(f * u);
                out.at3(4 * b + 1, y, x) = std::cos(f * u);
                out.at3(4 * b + 2, y, x) = std::sin(f * v);
                out.at3(4 * b + 3, y, x) = std::cos(f * v);
            }
    }
    return out;
}

void DenoiserConfig::validate() const {
    require(base_channels >= 4, ErrorCode::config, "denoiser config: base_channels must be >= 4");
    require(!channel_multipliers.empty(), ErrorCode::config, "denoiser config: empty channel_multipliers");
    for (int m : channel_multipliers)
        require(m >= 1, ErrorCode::config, "denoiser config: multipliers must be >= 1");
    require(channel_multipliers[0] == 1, ErrorCode::config, "denoiser config: first multiplier must be 1");
    require(n_fourier_bands >= 1, ErrorCode::config, "denoiser config: n_fourier_bands must be >= 1");
    require(embed_dim >= 8 && embed_dim % 2 == 0, ErrorCode::config,
            "denoiser config: embed_dim must be even and >= 8");
    require(n_res_blocks >= 1, ErrorCode::config, "denoiser config: n_res_blocks must be >= 1");
    require(encoder_channels >= 4, ErrorCode::config, "denoiser config: encoder_channels must be >= 4");
}

const Var& DenoiserParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    require(it != tensors.end(), ErrorCode::runtime, "denoiser params: missing tensor " + name);
    return it->second;
}

size_t DenoiserParams::parameter_count() const {
    size_t n = 0;
    for (const auto& [name, var] : tensors)
        n += var->value.numel();
    return n;
}

bool DenoiserParams::all_finite() const {
    for (const auto& [name, var] : tensors)
        if (!var->value.all_finite())
            return false;
    return true;
}

namespace {

int norm_groups(int channels) {
    for (int g : {8, 4, 2})
        if (channels % g == 0)
            return g;
    return 1;
}

TensorF kaiming_uniform(const std::vector<int>& shape, int fan_in, Rng& rng) {
    TensorF t(shape);
    const double bound = std::sqrt(1.0 / fan_in);
    for (float& v : t.v)
        v = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

struct ParamBuilder {
    std::map<std::string, Var>& out;
    Rng& rng;

    void conv(const std::string& name, int f, int c, int k, bool zero = false) {
        TensorF w = zero ? TensorF({f, c, k, k}) : kaiming_uniform({f, c, k, k}, c * k * k, rng);
        out.emplace(name + ".w", nn::leaf(std::move(w)));
        out.emplace(name + ".b", nn::leaf(TensorF({f})));
    }
    void lin(const std::string& name, int fout, int fin) {
        out.emplace(name + ".w", nn::leaf(kaiming_uniform({fout, fin}, fin, rng)));
        out.emplace(name + ".b", nn::leaf(TensorF({fout})));
    }
    void norm(const std::string& name, int c) {
        out.emplace(name + ".g", nn::leaf(TensorF({c}, 1.0f)));
        out.emplace(name + ".b", nn::leaf(TensorF({c})));
    }
    // modulated denoiser block (norm-film-silu-conv twice + skip)
    void res_block(const std::string& name, int cin, int cout) {
        norm(name + ".norm1", cin);
        conv(name + ".conv1", cout, cin, 3);
        norm(name + ".norm2", cout);
        conv(name + ".conv2", cout, cout, 3);
        if (cin != cout)
            conv(name + ".skip", cout, cin, 1);
    }
    // EDSR-style encoder block (conv-silu-conv + skip, no norm)
    void enc_block(const std::string& name, int c) {
        conv(name + ".conv1", c, c, 3);
        conv(name + ".conv2", c, c, 3);
    }
};

// channel bookkeeping shared by init and forward
struct Topology {
    const DenoiserConfig& cfg;

    int enc_in(int level, int block) const {
        if (block > 0)
            return cfg.channels(level);
        return level == 0 ? cfg.channels(0) : cfg.channels(level - 1);
    }
    int dec_in(int level, int block) const {
        return block == 0 ? cfg.channels(level) + cfg.channels(level + 1) : cfg.channels(level);
    }
    int adapter_in(int level, int block) const {
        if (block > 0)
            return cfg.adapter_channels(level);
        return level == 0 ? cfg.adapter_channels(0) : cfg.adapter_channels(level - 1);
    }
};

}  // namespace

DenoiserParams init_params(const DenoiserConfig& config, Rng& rng) {
    config.validate();
    DenoiserParams p;
    p.config = config;
    ParamBuilder b{p.tensors, rng};
    Topology topo{config};

    const int fc = config.encoder_channels;
    for (const char* enc : {"enc_lr", "enc_init"}) {
        b.conv(std::string(enc) + ".conv_in", fc, 3, 3);
        for (int k = 0; k < config.n_res_blocks; ++k)
            b.enc_block(std::string(enc) + ".rb" + std::to_string(k), fc);
    }

    const int e = config.embed_dim;
    b.lin("embed.l1", e, 2 * e);
    b.lin("embed.l2", e, e);
    b.lin("adapter.proj", config.adapter_channels(0), e);

    b.conv("adapter.ec1", config.adapter_channels(0), 4 * config.n_fourier_bands, 3);
    b.conv("adapter.ec2", config.adapter_channels(0), config.adapter_channels(0), 3);

    const int levels = config.levels();
    for (int l = 0; l < levels; ++l)
        for (int k = 0; k < config.n_res_blocks; ++k) {
            const std::string name = "adapter.l" + std::to_string(l) + ".b" + std::to_string(k);
            b.norm(name + ".norm1", topo.adapter_in(l, k));
            b.conv(name + ".conv1", config.adapter_channels(l), topo.adapter_in(l, k), 3);
            b.norm(name + ".norm2", config.adapter_channels(l));
            b.conv(name + ".conv2", config.adapter_channels(l), config.adapter_channels(l), 3);
            if (topo.adapter_in(l, k) != config.adapter_channels(l))
                b.conv(name + ".skip", config.adapter_channels(l), topo.adapter_in(l, k), 1);
        }

    // modulation heads start at zero so the adapter is an identity at init
    for (int l = 0; l < levels; ++l)
        for (int k = 0; k < config.n_res_blocks; ++k)
            b.conv("adapter.head.enc" + std::to_string(l) + ".b" + std::to_string(k),
                   2 * topo.enc_in(l, k), config.adapter_channels(l), 1, /*zero=*/true);
    for (int k = 0; k < config.n_res_blocks; ++k)
        b.conv("adapter.head.mid.b" + std::to_string(k), 2 * config.channels(levels - 1),
               config.adapter_channels(levels - 1), 1, /*zero=*/true);
    for (int l = 0; l < levels - 1; ++l)
        for (int k = 0; k < config.n_res_blocks; ++k)
            b.conv("adapter.head.dec" + std::to_string(l) + ".b" + std::to_string(k),
                   2 * topo.dec_in(l, k), config.adapter_channels(l), 1, /*zero=*/true);

    b.conv("unet.stem", config.channels(0), 9 + 2 * fc, 3);
    for (int l = 0; l < levels; ++l)
        for (int k = 0; k < config.n_res_blocks; ++k)
            b.res_block("unet.enc" + std::to_string(l) + ".b" + std::to_string(k), topo.enc_in(l, k),
                        config.channels(l));
    for (int k = 0; k < config.n_res_blocks; ++k)
        b.res_block("unet.mid.b" + std::to_string(k), config.channels(levels - 1),
                    config.channels(levels - 1));
    for (int l = levels - 2; l >= 0; --l)
        for (int k = 0; k < config.n_res_blocks; ++k)
            b.res_block("unet.dec" + std::to_string(l) + ".b" + std::to_string(k), topo.dec_in(l, k),
                        config.channels(l));
    b.norm("unet.out_norm", config.channels(0));
    b.conv("unet.out_conv", 3, config.channels(0), 3);

    return p;
}

std::vector<float> sinusoidal_embedding(double v, int dim) {
    const int half = dim / 2;
    std::vector<float> out(static_cast<size_t>(dim));
    for (int k = 0; k < half; ++k) {
        const double f = std::exp(-std::log(10000.0) * k / half);
        out[static_cast<size_t>(k)] = static_cast<float>(std::sin(v * f));
        out[static_cast<size_t>(half + k)] = static_cast<float>(std::cos(v * f));
    }
    return out;
}

namespace {

using nn::add;
using nn::add_rowvec;
using nn::avgpool2;
using nn::concat_ch;
using nn::conv2d;
using nn::film;
using nn::group_norm;
using nn::silu;
using nn::slice_ch;
using nn::upsample_to;

struct Forward {
    const DenoiserParams& p;

    Var conv(const Var& x, const std::string& name, int pad) const {
        return conv2d(x, p.at(name + ".w"), p.at(name + ".b"), pad);
    }
    Var norm(const Var& x, const std::string& name) const {
        const int c = x->value.shape[1];
        return group_norm(x, norm_groups(c), p.at(name + ".g"), p.at(name + ".b"));
    }

    // feature encoder (EDSR style): conv-in plus residual conv blocks
    Var encoder(const Var& img, const std::string& name) const {
        Var h = conv(img, name + ".conv_in", 1);
        for (int k = 0; k < p.config.n_res_blocks; ++k) {
            const std::string rb = name + ".rb" + std::to_string(k);
            Var t = conv(silu(conv(h, rb + ".conv1", 1)), rb + ".conv2", 1);
            h = add(h, t);
        }
        return h;
    }

    // plain residual block (adapter trunk)
    Var plain_block(const Var& x, const std::string& name, int cout) const {
        Var h = silu(norm(x, name + ".norm1"));
        h = conv(h, name + ".conv1", 1);
        h = silu(norm(h, name + ".norm2"));
        h = conv(h, name + ".conv2", 1);
        Var skip = x->value.shape[1] == cout ? x : conv(x, name + ".skip", 0);
        return add(skip, h);
    }

    // modulated residual block: the first normalization output is transformed
    // as feature*(1+gamma)+beta before the usual conv stack
    Var mod_block(const Var& x, const std::string& name, int cout, const Var& mod) const {
        const int cin = x->value.shape[1];
        Var h = norm(x, name + ".norm1");
        Var gamma = slice_ch(mod, 0, cin);
        Var beta = slice_ch(mod, cin, 2 * cin);
        h = film(h, gamma, beta);
        h = conv(silu(h), name + ".conv1", 1);
        h = silu(norm(h, name + ".norm2"));
        h = conv(h, name + ".conv2", 1);
        Var skip = cin == cout ? x : conv(x, name + ".skip", 0);
        return add(skip, h);
    }
};

}  // namespace

nn::Var denoiser_forward(const DenoiserParams& params, const DenoiserInputs& in) {
    const DenoiserConfig& cfg = params.config;
    const int n = in.x_t.shape[0];
    require(in.x_t.ndim() == 4 && in.x_t.shape[1] == 3, ErrorCode::invalid_argument,
            "denoiser: x_t must be [N,3,H,W]");
    require(in.lr_res.same_shape(in.x_t) && in.init_up.same_shape(in.x_t), ErrorCode::invalid_argument,
            "denoiser: resolution mismatch among conditioning inputs");
    require(static_cast<int>(in.t.size()) == n && static_cast<int>(in.s.size()) == n,
            ErrorCode::invalid_argument, "denoiser: conditioning value count mismatch");
    const int h = in.x_t.shape[2], w = in.x_t.shape[3];
    require(in.coord_feat.ndim() == 3 && in.coord_feat.shape[0] == 4 * cfg.n_fourier_bands &&
                in.coord_feat.shape[1] == h && in.coord_feat.shape[2] == w,
            ErrorCode::invalid_argument, "denoiser: coordinate features do not match the resolution");
    for (int i = 0; i < n; ++i) {
        require(in.t[static_cast<size_t>(i)] >= 1.0, ErrorCode::invalid_argument,
                "denoiser: timestep out of range");
        require(in.s[static_cast<size_t>(i)] >= 1.0 - 1e-9 && in.s[static_cast<size_t>(i)] < 100.0,
                ErrorCode::invalid_argument, "denoiser: scale out of range");
    }

    Forward f{params};
    Topology topo{cfg};
    const int levels = cfg.levels();
    const int e = cfg.embed_dim;

    Var x_t = nn::constant(in.x_t);
    Var lr = nn::constant(in.lr_res);
    Var init = nn::constant(in.init_up);

    // broadcast shared coordinate features across the batch
    TensorF coords({n, in.coord_feat.shape[0], h, w});
    for (int i = 0; i < n; ++i)
        std::copy(in.coord_feat.v.begin(), in.coord_feat.v.end(),
                  coords.v.begin() + static_cast<size_t>(i) * in.coord_feat.numel());
    Var cf = nn::constant(std::move(coords));

    // fused (t, s) embedding
    TensorF emb_in({n, 2 * e});
    for (int i = 0; i < n; ++i) {
        const auto te = sinusoidal_embedding(in.t[static_cast<size_t>(i)], e);
        const auto se = sinusoidal_embedding(100.0 * in.s[static_cast<size_t>(i)], e);
        std::copy(te.begin(), te.end(), emb_in.v.begin() + static_cast<size_t>(i) * 2 * e);
        std::copy(se.begin(), se.end(), emb_in.v.begin() + static_cast<size_t>(i) * 2 * e + e);
    }
    Var emb = nn::linear(nn::constant(std::move(emb_in)), params.at("embed.l1.w"), params.at("embed.l1.b"));
    emb = nn::linear(silu(emb), params.at("embed.l2.w"), params.at("embed.l2.b"));

    // coordinate adapter trunk (per-level features)
    Var a = f.conv(cf, "adapter.ec1", 1);
    a = f.conv(silu(a), "adapter.ec2", 1);
    a = add_rowvec(a, nn::linear(emb, params.at("adapter.proj.w"), params.at("adapter.proj.b")));
    std::vector<Var> afeat(static_cast<size_t>(levels));
    for (int l = 0; l < levels; ++l) {
        if (l > 0)
            a = avgpool2(a);
        for (int k = 0; k < cfg.n_res_blocks; ++k)
            a = f.plain_block(a, "adapter.l" + std::to_string(l) + ".b" + std::to_string(k),
                              cfg.adapter_channels(l));
        afeat[static_cast<size_t>(l)] = a;
    }

    auto head = [&](const std::string& name, int level) {
        return f.conv(afeat[static_cast<size_t>(level)], name, 0);
    };

    // denoising U-Net
    Var h0 = f.conv(concat_ch({x_t, lr, init, f.encoder(lr, "enc_lr"), f.encoder(init, "enc_init")}),
                    "unet.stem", 1);
    std::vector<Var> skips(static_cast<size_t>(levels));
    Var x = h0;
    for (int l = 0; l < levels; ++l) {
        if (l > 0)
            x = avgpool2(x);
        for (int k = 0; k < cfg.n_res_blocks; ++k) {
            const std::string name = "unet.enc" + std::to_string(l) + ".b" + std::to_string(k);
            x = f.mod_block(x, name, cfg.channels(l),
                            head("adapter.head.enc" + std::to_string(l) + ".b" + std::to_string(k), l));
        }
        skips[static_cast<size_t>(l)] = x;
    }
    for (int k = 0; k < cfg.n_res_blocks; ++k)
        x = f.mod_block(x, "unet.mid.b" + std::to_string(k), cfg.channels(levels - 1),
                        head("adapter.head.mid.b" + std::to_string(k), levels - 1));
    for (int l = levels - 2; l >= 0; --l) {
        const Var& skip = skips[static_cast<size_t>(l)];
        x = upsample_to(x, skip->value.shape[2], skip->value.shape[3]);
        x = concat_ch({skip, x});
        for (int k = 0; k < cfg.n_res_blocks; ++k) {
            const std::string name = "unet.dec" + std::to_string(l) + ".b" + std::to_string(k);
            x = f.mod_block(x, name, cfg.channels(l),
                            head("adapter.head.dec" + std::to_string(l) + ".b" + std::to_string(k), l));
        }
    }
    x = silu(f.norm(x, "unet.out_norm"));
    return f.conv(x, "unet.out_conv", 1);
}

TensorF to_float(const Image& img) {
    TensorF t(img.shape);
    for (size_t i = 0; i < t.v.size(); ++i)
        t.v[i] = static_cast<float>(img.v[i]);
    return t;
}

Image to_double(const TensorF& t) {
    std::vector<int> shape = t.shape;
    if (shape.size() == 4) {
        require(shape[0] == 1, ErrorCode::invalid_argument, "to_double: batch must be 1");
        shape.erase(shape.begin());
    }
    Image img(shape);
    for (size_t i = 0; i < img.v.size(); ++i)
        img.v[i] = static_cast<double>(t.v[i]);
    return img;
}

Image denoise(const Image& x_t, int t, double s, const Image& x_lr_up, const Image& x_init_up,
              const CoordinateMap& cmap, const DenoiserParams& params) {
    require(x_t.ndim() == 3 && x_t.channels() == 3, ErrorCode::invalid_argument,
            "denoise: x_t must be [3,H,W]");
    require_same_shape(x_t, x_lr_up, "denoise");
    require_same_shape(x_t, x_init_up, "denoise");
    require(cmap.height() == x_t.height() && cmap.width() == x_t.width(), ErrorCode::invalid_argument,
            "denoise: coordinate map resolution mismatch");
    require(t >= 1, ErrorCode::invalid_argument, "denoise: timestep out of range");

    nn::NoGradGuard ng;
    DenoiserInputs in;
    in.x_t = TensorF({1, 3, x_t.height(), x_t.width()});
    in.lr_res = in.x_t;
    in.init_up = in.x_t;
    std::copy(x_t.v.begin(), x_t.v.end(), in.x_t.v.begin());
    for (size_t i = 0; i < x_t.v.size(); ++i) {
        in.x_t.v[i] = static_cast<float>(x_t.v[i]);
        in.lr_res.v[i] = static_cast<float>(x_lr_up.v[i]);
        in.init_up.v[i] = static_cast<float>(x_init_up.v[i]);
    }
    in.coord_feat = to_float(fourier_encode(cmap, params.config.n_fourier_bands));
    in.t = {static_cast<double>(t)};
    in.s = {s};
    nn::Var out = denoiser_forward(params, in);
    return to_double(out->value);
}

}  // namespace casr
