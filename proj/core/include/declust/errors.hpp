#pragma once

#include <stdexcept>
#include <string>

namespace declust {

/// Bad config file / unknown key / malformed flag. CLI exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A self-check (gradient suite, format check) failed. CLI exit code 2.
struct VerificationError : std::runtime_error {
    explicit VerificationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File system problem. CLI exit code 3.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace declust
