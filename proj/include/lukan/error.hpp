#pragma once

#include <stdexcept>
#include <string>

namespace lukan {

// Invalid configuration or argument (bad degree, unknown basis, too-short signal).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operand shapes disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (motion files, datasets, artifacts).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf detected in an activation, gradient or loss.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lukan
