#pragma once

#include <stdexcept>
#include <string>

namespace pxcl {

// Error taxonomy maps onto process exit codes at the CLI boundary:
//   ArgumentError / ConfigError -> 2, FormatError -> 3, NumericError -> 4.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pxcl
