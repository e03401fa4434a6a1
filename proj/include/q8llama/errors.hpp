#pragma once

#include <stdexcept>
#include <string>

namespace q8llama {

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can catch one type and print a single-line diagnostic.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite input handed to the quantizer.
class QuantizationError : public Error {
public:
    using Error::Error;
};

/// Lengths, group sizes or matrix dimensions that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Position beyond the KV cache / context window.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated binary/text input.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Index (token id) outside its valid range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Invalid user-supplied settings (sampler, CLI flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Inputs outside an operation's mathematical domain (e.g. empty sequence).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The performance model cannot be built from the given cycle table.
class ModelError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace q8llama
