#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace casr {

// Flat folder of decodable images with deterministic iteration order.
struct Dataset {
    std::vector<std::string> items;  // absolute or cwd-relative paths, sorted
    uint64_t seed = 0;

    static Dataset from_folder(const std::string& dir);
    size_t size() const { return items.size(); }
    Image load(size_t i) const;
};

// Procedural image used by the synthetic generator; exposed so tests can
// command an exact grating frequency.
Image make_grating(int h, int w, int fx, int fy, double amplitude, double phase);

// Generates n images mixing smooth random fields, oriented gratings and
// polygon overlays into out_dir (item_%04d.png) plus a manifest.json echoing
// the generation spec. Fully determined by seed.
Dataset make_synthetic_dataset(int n, int h, int w, uint64_t seed, const std::string& out_dir);

}  // namespace casr
