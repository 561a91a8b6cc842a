#pragma once

#include <stdexcept>
#include <string>

namespace rlpipe {

/// Invalid configuration or parameter set (rejected before any work runs).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed runtime input (bad batch shape, mismatched lengths, ...).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Internal inconsistency; indicates a bug, not a user error.
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

} // namespace rlpipe
