#pragma once

#include <stdexcept>
#include <string>

namespace casr {

// Error categories. The C API and the CLI map these onto status/exit codes,
// so keep the set small and stable.
enum class ErrorCode {
    invalid_argument,  // bad values, shape mismatches, out-of-range parameters
    config,            // unparseable or inconsistent configuration
    io,                // file system, PNG decode/encode, checkpoint format
    runtime,           // divergence, non-finite values, internal failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond)
        fail(code, msg);
}

}  // namespace casr
