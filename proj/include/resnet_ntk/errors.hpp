#pragma once

#include <stdexcept>
#include <string>

namespace resnet_ntk {

// Bad shapes, out-of-range parameters, malformed configuration files.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite intermediate values: forward overflow or diverging training.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A request that would exceed a configured size guard.
class CapacityError : public std::length_error {
public:
    using std::length_error::length_error;
};

} // namespace resnet_ntk
