#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace mgeo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (catalog JSON, model transcripts, wire frames).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Structurally valid input that violates a catalog or config rule.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// PPM/PGM and float sidecar failures.
class CodecError : public Error {
public:
    using Error::Error;
};

/// Value outside the domain an operation accepts.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A file could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Optimization produced a non-finite loss.
class AbortError : public Error {
public:
    using Error::Error;
};

// Warnings go through a replaceable sink so tests can capture them.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace mgeo
