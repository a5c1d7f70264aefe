#pragma once

#include <stdexcept>
#include <string>

namespace unlearn {

// Error hierarchy shared across the library. The CLI maps each category to a
// distinct process exit code, so new error sites should pick the category that
// matches how a caller has to react.

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values (bad lambda, empty grids, malformed keys).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Problems with input data: missing files, unparsable cells, label range,
// empty datasets, incompatible checkpoints.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numeric contract violations: shape mismatches, non-finite values,
// non-scalar backward targets.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// The game produced a non-finite loss; carries round and component info.
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace unlearn
