#pragma once

#include <stdexcept>
#include <string>

namespace diffad {

// Error taxonomy. Each class maps onto one failure mode the library
// promises to report; the CLI translates them into exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// A documented precondition was violated (non-scalar loss, odd embedding
// dim, timestep out of range, ...).
struct ContractError : Error {
    using Error::Error;
};

// Invalid construction parameters (schedule bounds, split fractions).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed text input; message names the offending line where possible.
struct ParseError : Error {
    using Error::Error;
};

// Malformed binary input (bad magic, truncation, version mismatch).
struct FormatError : Error {
    using Error::Error;
};

// Metric preconditions not met (e.g. single-class AUC input).
struct MetricError : Error {
    using Error::Error;
};

// Train/test split cannot be formed as requested.
struct SplitError : Error {
    using Error::Error;
};

// A detector cannot be fitted on the given data.
struct FitError : Error {
    using Error::Error;
};

// Non-finite values where finiteness is part of the contract.
struct NumericError : Error {
    using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
    using Error::Error;
};

} // namespace diffad
