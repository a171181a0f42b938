#include "core/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/image_io.hpp"
#include "core/resize.hpp"

namespace fs = std::filesystem;

namespace casr {

Dataset Dataset::from_folder(const std::string& dir) {
    require(fs::is_directory(dir), ErrorCode::config, "dataset folder not found: " + dir);
    Dataset ds;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png")
            ds.items.push_back(e.path().string());
    }
    std::sort(ds.items.begin(), ds.items.end());
    require(!ds.items.empty(), ErrorCode::config, "dataset folder has no .png images: " + dir);
    return ds;
}

Image Dataset::load(size_t i) const {
    require(i < items.size(), ErrorCode::invalid_argument, "dataset index out of range");
    return load_image(items[i]);
}

Image make_grating(int h, int w, int fx, int fy, double amplitude, double phase) {
    Image g({3, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = amplitude * std::sin(2.0 * M_PI * (fx * (x + 0.5) / w + fy * (y + 0.5) / h) + phase);
            for (int c = 0; c < 3; ++c)
                g.at3(c, y, x) = v;
        }
    }
    return g;
}

namespace {

Image smooth_field(int h, int w, Rng& rng) {
    const int lh = std::max(2, h / 8), lw = std::max(2, w / 8);
    Image low({3, lh, lw});
    for (int c = 0; c < 3; ++c) {
        double base = rng.uniform(-0.45, 0.45);
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x)
                low.at3(c, y, x) = base + 0.55 * rng.normal() * 0.5;
    }
    return resize_bicubic(low, h, w);
}

void add_polygons(Image& img, Rng& rng) {
    const int h = img.height(), w = img.width();
    const int n_poly = rng.uniform_int(1, 3);
    for (int p = 0; p < n_poly; ++p) {
        const double cx = rng.uniform(0.15, 0.85) * w;
        const double cy = rng.uniform(0.15, 0.85) * h;
        const double radius = rng.uniform(0.08, 0.3) * std::min(h, w);
        const int verts = rng.uniform_int(3, 6);
        std::vector<double> angles(static_cast<size_t>(verts));
        for (double& a : angles)
            a = rng.uniform(0.0, 2.0 * M_PI);
        std::sort(angles.begin(), angles.end());
        std::vector<std::pair<double, double>> pts;
        for (double a : angles)
            pts.emplace_back(cx + radius * std::cos(a) * rng.uniform(0.7, 1.0),
                             cy + radius * std::sin(a) * rng.uniform(0.7, 1.0));
        double color[3];
        for (double& c : color)
            c = rng.uniform(-0.8, 0.8);

        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                // inside iff on the same side of every edge (convex, CCW-sorted)
                bool inside = true;
                for (size_t i = 0; i < pts.size() && inside; ++i) {
                    const auto& a = pts[i];
                    const auto& b = pts[(i + 1) % pts.size()];
                    const double cross = (b.first - a.first) * (y + 0.5 - a.second) -
                                         (b.second - a.second) * (x + 0.5 - a.first);
                    inside = cross >= 0.0;
                }
                if (inside)
                    for (int c = 0; c < 3; ++c)
                        img.at3(c, y, x) = 0.3 * img.at3(c, y, x) + 0.7 * color[c];
            }
        }
    }
}

void add_image(Image& dst, const Image& src) {
    for (size_t i = 0; i < dst.v.size(); ++i)
        dst.v[i] += src.v[i];
}

}  // namespace

Dataset make_synthetic_dataset(int n, int h, int w, uint64_t seed, const std::string& out_dir) {
    require(n > 0, ErrorCode::invalid_argument, "synthetic dataset: n must be positive");
    require(h >= 8 && w >= 8, ErrorCode::invalid_argument, "synthetic dataset: size must be >= 8");
    fs::create_directories(out_dir);

    nlohmann::json manifest;
    manifest["n"] = n;
    manifest["height"] = h;
    manifest["width"] = w;
    manifest["seed"] = seed;
    manifest["generator"] = "casr-synthetic-v1";
    auto& items = manifest["items"] = nlohmann::json::array();

    Dataset ds;
    ds.seed = seed;
    for (int i = 0; i < n; ++i) {
        Rng rng(mix64(seed, static_cast<uint64_t>(i), 0x5158ULL));
        Image img = smooth_field(h, w, rng);
        nlohmann::json meta;
        char name[32];
        std::snprintf(name, sizeof(name), "item_%04d.png", i);
        meta["file"] = name;

        const int kind = i % 4;
        if (kind == 0) {
            meta["kind"] = "smooth";
        } else if (kind == 1) {
            const int fx = rng.uniform_int(6, std::max(6, w / 4));
            const int fy = rng.uniform_int(0, std::max(0, h / 6));
            const double amp = rng.uniform(0.35, 0.5);
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            add_image(img, make_grating(h, w, fx, fy, amp, phase));
            meta["kind"] = "grating";
            meta["fx"] = fx;
            meta["fy"] = fy;
            meta["amplitude"] = amp;
            meta["phase"] = phase;
        } else if (kind == 2) {
            add_polygons(img, rng);
            meta["kind"] = "polygons";
        } else {
            const int fx = rng.uniform_int(6, std::max(6, w / 4));
            const int fy = rng.uniform_int(0, std::max(0, h / 6));
            add_image(img, make_grating(h, w, fx, fy, rng.uniform(0.2, 0.35), rng.uniform(0.0, 2.0 * M_PI)));
            add_polygons(img, rng);
            meta["kind"] = "mixed";
            meta["fx"] = fx;
            meta["fy"] = fy;
        }

        img = clip_image(img);
        const std::string path = (fs::path(out_dir) / name).string();
        save_image(img, path);
        ds.items.push_back(path);
        items.push_back(meta);
    }

    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    require(mf.good(), ErrorCode::io, "cannot write manifest in " + out_dir);
    mf << manifest.dump(2) << "\n";
    return ds;
}

}  // namespace casr
