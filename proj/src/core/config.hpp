#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace casr {

// Flat key = value configuration with sectioned prefixes (schedule.*, model.*,
// train.*, data.*, scg.*, base.*). Unknown keys are rejected; every key has a
// documented default; the fully resolved map is echoed to disk next to run
// outputs.
class RunConfig {
public:
    // all defaults resolved
    RunConfig();

    static RunConfig load(const std::string& path, const std::vector<std::string>& overrides = {});
    static RunConfig from_map(const std::map<std::string, std::string>& kv);

    void set(const std::string& key, const std::string& value);  // rejects unknown keys
    void apply_override(const std::string& assignment);          // "key=value"

    const std::string& str(const std::string& key) const;
    int integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<int> int_list(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }
    void write(const std::string& path) const;

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace casr
