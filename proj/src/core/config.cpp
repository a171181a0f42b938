#include "core/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace casr {

namespace {

const std::map<std::string, std::string>& default_entries() {
    static const std::map<std::string, std::string> defaults = {
        {"schedule.steps", "15"},
        {"schedule.kappa", "2.0"},
        {"schedule.eta_min", "0.001"},
        {"schedule.eta_max", "0.999"},

        {"model.base_channels", "24"},
        {"model.channel_multipliers", "1,2"},
        {"model.n_res_blocks", "1"},
        {"model.embed_dim", "96"},
        {"model.fourier_bands", "4"},
        {"model.encoder_channels", "12"},

        {"plan.s_fix", "2.0"},

        {"train.steps", "2000"},
        {"train.batch_size", "8"},
        {"train.lr", "1e-4"},
        {"train.lr_low", "1e-5"},
        {"train.lr_drop_step", "0"},  // 0 -> midpoint of train.steps
        {"train.adam_beta1", "0.9"},
        {"train.adam_beta2", "0.999"},
        {"train.adam_eps", "1e-8"},
        {"train.noise_aug_steps", "5"},
        {"train.seed", "42"},
        {"train.s_max", "8"},
        {"train.scale_p", "0.8"},
        {"train.single_stage", "false"},
        {"train.checkpoint_every", "1000"},
        {"train.overfit_n", "0"},  // >0 trains on a fixed batch of the first N samples
        {"train.log_every", "10"},

        {"data.path", ""},
        {"data.synthetic_n", "0"},
        {"data.size", "64"},
        {"data.crop", "48"},
        {"data.val_fraction", "0.1"},

        {"scg.zeta", "0.1"},
        {"scg.reference", "prev"},  // prev | init | off

        {"base.mode", "bicubic"},  // bicubic | learned
        {"base.checkpoint", ""},
        {"base.channels", "24"},
        {"base.blocks", "2"},
        {"base.fourier_bands", "4"},
        {"base.steps", "1500"},
        {"base.lr", "1e-3"},
        {"base.batch", "8"},
    };
    return defaults;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() : kv_(default_entries()) {}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    for (const auto& [k, v] : kv)
        cfg.set(k, v);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream f(path);
        require(f.good(), ErrorCode::config, "cannot open config file: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const std::string s = trim(line);
            if (s.empty() || s[0] == '#')
                continue;
            const size_t eq = s.find('=');
            require(eq != std::string::npos, ErrorCode::config,
                    path + ":" + std::to_string(lineno) + ": expected key = value");
            cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
    }
    for (const auto& o : overrides)
        cfg.apply_override(o);
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    require(default_entries().count(key) != 0, ErrorCode::config, "unknown config key: " + key);
    kv_[key] = value;
}

void RunConfig::apply_override(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    require(eq != std::string::npos, ErrorCode::config, "override must be key=value: " + assignment);
    std::string key = assignment.substr(0, eq);
    std::string val = assignment.substr(eq + 1);
    set(trim(key), trim(val));
}

const std::string& RunConfig::str(const std::string& key) const {
    auto it = kv_.find(key);
    require(it != kv_.end(), ErrorCode::config, "unknown config key: " + key);
    return it->second;
}

int RunConfig::integer(const std::string& key) const {
    const std::string& s = str(key);
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    require(end && *end == '\0' && !s.empty(), ErrorCode::config, "config " + key + ": not an integer: " + s);
    return static_cast<int>(v);
}

double RunConfig::real(const std::string& key) const {
    const std::string& s = str(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require(end && *end == '\0' && !s.empty(), ErrorCode::config, "config " + key + ": not a number: " + s);
    return v;
}

bool RunConfig::boolean(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes")
        return true;
    if (s == "false" || s == "0" || s == "no")
        return false;
    fail(ErrorCode::config, "config " + key + ": not a boolean: " + s);
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
    const std::string& s = str(key);
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const long v = std::strtol(item.c_str(), &end, 10);
        require(end && *end == '\0' && !item.empty(), ErrorCode::config,
                "config " + key + ": not an integer list: " + s);
        out.push_back(static_cast<int>(v));
    }
    require(!out.empty(), ErrorCode::config, "config " + key + ": empty list");
    return out;
}

void RunConfig::write(const std::string& path) const {
    std::ofstream f(path);
    require(f.good(), ErrorCode::io, "cannot write config echo: " + path);
    f << "# resolved configuration\n";
    for (const auto& [k, v] : kv_)
        f << k << " = " << v << "\n";
}

}  // namespace casr
