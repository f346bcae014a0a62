#pragma once

#include <stdexcept>
#include <string>

namespace callsim {

/// Base of every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or record.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A tag label that does not resolve against the taxonomy, or a taxonomy
/// that violates its own invariants.
class TagError : public Error {
public:
    TagError(std::string label, const std::string& what)
        : Error(what), label_(std::move(label)) {}

    const std::string& label() const noexcept { return label_; }

private:
    std::string label_;
};

/// Precondition or range violation in a request.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Structural invariant violated while building a factual base.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Operation not allowed in the current lifecycle state.
class StateError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Backend transport failure. Retryable.
class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace callsim
