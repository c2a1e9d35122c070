#pragma once

#include <stdexcept>
#include <string>

namespace sap {

/// Error categories. The numeric values are shared with the C API status codes.
enum class ErrorCode : int {
    kInvalidArgument = 1,
    kIo = 2,
    kFormat = 3,
    kValidation = 4,
    kMissingCalibration = 5,
    kNumeric = 6,
    kInternal = 7,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

/// Writes a warning line to stderr. Used for advisory validation results.
void warn(const std::string& message);

/// Suppresses warn() output (tests, benchmarks). Returns the previous setting.
bool set_warnings_enabled(bool enabled);

}  // namespace sap
