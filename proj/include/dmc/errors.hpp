#pragma once

#include <stdexcept>
#include <string>

namespace dmc {

/// Malformed file or document; the message names the offending field.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value parsed fine but breaks a type invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or sequence dimensions disagree.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An operation was called in a way its contract forbids.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Out-of-domain configuration or parameter value.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A training loss became non-finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dmc
