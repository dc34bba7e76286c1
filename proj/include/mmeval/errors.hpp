#pragma once

#include <stdexcept>
#include <string>

namespace mmeval {

// Error taxonomy mirrors the CLI exit codes: ConfigError -> 2, IoError -> 3,
// ResumeMismatchError -> 4. Everything else is a plain runtime_error.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ResumeMismatchError : std::runtime_error {
    explicit ResumeMismatchError(const std::string& what) : std::runtime_error(what) {}
};

// Raised by vector statistics when a required AMCE coordinate is undefined.
struct AnalysisError : std::runtime_error {
    explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmeval
