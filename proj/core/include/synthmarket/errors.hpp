#pragma once

#include <stdexcept>
#include <string>

namespace synthmarket {

/// Bad input data or configuration. The CLI maps this to exit code 2.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that could not produce a valid result (degenerate data,
/// diverging training, ...). The CLI maps this to exit code 1.
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace synthmarket
