#pragma once

#include <stdexcept>
#include <string>

namespace drl {

/// Incompatible tensor or image dimensions.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// File could not be read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint payload is truncated, corrupted, or of the wrong version.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configuration field failed validation. `field()` names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
    [[nodiscard]] const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// A training loss became non-finite or exceeded the divergence threshold.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace drl
