#pragma once

#include <stdexcept>
#include <string>

namespace wsco {

// Bad wiring: shape mismatches, invalid hyperparameters, missing inputs.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation called out of order (e.g. backward without a recorded forward).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerically invalid input or result (non-finite loss, unnormalized distribution).
struct ComputeError : std::runtime_error {
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline void check_state(bool ok, const std::string& msg) {
    if (!ok) throw StateError(msg);
}

inline void check_compute(bool ok, const std::string& msg) {
    if (!ok) throw ComputeError(msg);
}

}  // namespace wsco
