#pragma once

#include <stdexcept>
#include <string>

namespace adaptkit {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: ConfigError/ContractError -> 2, IoError -> 3,
// NumericalError -> 4.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad key, bad value, incompatible settings.
struct ConfigError : Error {
    using Error::Error;
};

// A call violated an operation's preconditions (shape mismatch, out-of-range
// index, non-scalar loss, empty dataset, ...).
struct ContractError : Error {
    using Error::Error;
};

// Filesystem / serialization failures, including checkpoint hash mismatch.
struct IoError : Error {
    using Error::Error;
};

// Training aborted on a non-finite loss.
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace adaptkit
