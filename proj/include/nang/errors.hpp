#pragma once

#include <stdexcept>
#include <string>

namespace nang {

// Error taxonomy used across the library. The CLI maps these onto exit codes,
// so new failure modes should reuse one of the existing classes.

// Operand shapes do not line up (matmul inner dims, loss target shape, ...).
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// A parameter value violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
public:
    explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

// Input data violates an invariant (bad file contents, asymmetric counts, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A loss or gradient became non-finite during optimization.
class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

// Run configuration problems (unknown key, bad value, missing file).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A requested evaluation does not apply to the dataset at hand.
class UnsupportedSetting : public std::runtime_error {
public:
    explicit UnsupportedSetting(const std::string& what) : std::runtime_error(what) {}
};

} // namespace nang
