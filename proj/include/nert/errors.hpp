#pragma once

#include <stdexcept>
#include <string>

namespace nert {

/// Violated precondition on an argument (bad index, shape mismatch, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inconsistent tunables, e.g. a pupil sampled more coarsely than the kernel.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable or malformed input data (images, containers, sidecars).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The optimizer produced a non-finite or runaway loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::string snapshot)
        : std::runtime_error(what), snapshot_(std::move(snapshot)) {}

    const std::string& snapshot() const noexcept { return snapshot_; }

private:
    std::string snapshot_;
};

}  // namespace nert
