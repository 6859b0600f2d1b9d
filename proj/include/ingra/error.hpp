#pragma once

#include <stdexcept>
#include <string>

namespace ingra {

// Error taxonomy shared by all modules. The CLI maps these to exit codes
// (usage/configuration -> 2, everything else -> 1).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad shapes, hyperparameters, or flag combinations.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or inconsistent input data (files, series, windows).
struct DataError : Error {
    using Error::Error;
};

// Operation invoked in an invalid order, e.g. backward before forward.
struct StateError : Error {
    using Error::Error;
};

// Non-finite values, singular systems, failed stochastic generation.
struct NumericError : Error {
    using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

} // namespace ingra
