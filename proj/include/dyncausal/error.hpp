#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace dyncausal {

/// Malformed or inconsistent input: dimension mismatches, invalid configs,
/// unidentifiable designs.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure inside filtering or smoothing, tagged with the
/// zero-based time index where it happened.
class InferenceError : public std::runtime_error {
public:
    InferenceError(const std::string& what, std::optional<std::size_t> time_index = std::nullopt)
        : std::runtime_error(time_index ? what + " (t index " + std::to_string(*time_index) + ")" : what),
          time_index_(time_index) {}

    std::optional<std::size_t> time_index() const noexcept { return time_index_; }

private:
    std::optional<std::size_t> time_index_;
};

/// Parameter estimation failed for every start.
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dyncausal
