#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace casr {

namespace {
constexpr char kMagic[8] = {'C', 'A', 'S', 'R', 'C', 'K', 'P', 'T'};
}

DiffusionSchedule CheckpointBundle::schedule() const {
    require(schedule_eta.has_value(), ErrorCode::runtime, "checkpoint has no schedule");
    return DiffusionSchedule::from_eta(*schedule_eta, schedule_kappa);
}

void save_checkpoint(const std::string& path, const CheckpointBundle& bundle) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["kind"] = bundle.kind;
    j["config"] = bundle.config;
    if (bundle.schedule_eta) {
        j["schedule"]["eta"] = *bundle.schedule_eta;
        j["schedule"]["kappa"] = bundle.schedule_kappa;
        j["schedule"]["steps"] = bundle.schedule_eta->size();
    }
    j["step"] = bundle.step;
    j["seed"] = bundle.seed;

    uint64_t offset = 0;
    auto& dir = j["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : bundle.tensors) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape;
        e["offset"] = offset;
        e["nbytes"] = t.numel() * sizeof(float);
        dir.push_back(e);
        offset += t.numel() * sizeof(float);
    }

    const std::string header = j.dump();
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot write checkpoint: " + path);
    f.write(kMagic, sizeof(kMagic));
    const uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : bundle.tensors)
        f.write(reinterpret_cast<const char*>(t.v.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    require(f.good(), ErrorCode::io, "checkpoint write failed: " + path);
}

CheckpointBundle load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    require(f.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorCode::io,
            "not a checkpoint file: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    require(f.good() && hlen > 0 && hlen < (1ULL << 30), ErrorCode::io, "corrupt checkpoint header: " + path);
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    require(f.good(), ErrorCode::io, "corrupt checkpoint header: " + path);

    nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
    require(!j.is_discarded(), ErrorCode::io, "corrupt checkpoint JSON: " + path);
    require(j.contains("format_version"), ErrorCode::io, "checkpoint missing version field: " + path);
    const int version = j["format_version"].get<int>();
    require(version == kCheckpointVersion, ErrorCode::config,
            "checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                std::to_string(kCheckpointVersion));

    CheckpointBundle b;
    b.kind = j["kind"].get<std::string>();
    b.config = j["config"].get<std::map<std::string, std::string>>();
    if (j.contains("schedule")) {
        b.schedule_eta = j["schedule"]["eta"].get<std::vector<double>>();
        b.schedule_kappa = j["schedule"]["kappa"].get<double>();
    }
    b.step = j["step"].get<int64_t>();
    b.seed = j["seed"].get<uint64_t>();

    for (const auto& e : j["tensors"]) {
        const std::string name = e["name"].get<std::string>();
        TensorF t(e["shape"].get<std::vector<int>>());
        require(e["nbytes"].get<uint64_t>() == t.numel() * sizeof(float), ErrorCode::io,
                "checkpoint tensor size mismatch: " + name);
        b.tensors.emplace(name, std::move(t));
    }
    // directory entries are sorted by name (map order both ways), blobs follow in order
    for (auto& [name, t] : b.tensors) {
        f.read(reinterpret_cast<char*>(t.v.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(float)));
        require(f.good(), ErrorCode::io, "checkpoint data truncated at tensor: " + name);
    }
    return b;
}

}  // namespace casr
