#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "core/config.hpp"
#include "core/schedule.hpp"
#include "core/tensor.hpp"

namespace casr {

// Versioned self-describing container: 8-byte magic, u64 JSON header length,
// JSON header (kind, config echo, schedule arrays, step, tensor directory),
// then raw float32 tensor data. The schedule is stored as explicit arrays so
// sampling is reproducible independent of the construction formula.
inline constexpr int kCheckpointVersion = 1;

struct CheckpointBundle {
    std::string kind;  // "denoiser" | "base_sr"
    std::map<std::string, std::string> config;
    std::optional<std::vector<double>> schedule_eta;
    double schedule_kappa = 0.0;
    int64_t step = 0;
    uint64_t seed = 0;
    std::map<std::string, TensorF> tensors;  // params plus optimizer state (adam.m.*, adam.v.*)

    DiffusionSchedule schedule() const;
};

void save_checkpoint(const std::string& path, const CheckpointBundle& bundle);
CheckpointBundle load_checkpoint(const std::string& path);

}  // namespace casr
