// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace coder_consensus {

/// Base of every error the engine throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file could not be parsed. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(std::string file, std::size_t line, std::string field, const std::string& what)
        : Error(format(file, line, field, what)), file_(std::move(file)), line_(line),
          field_(std::move(field)) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    static std::string format(const std::string& file, std::size_t line, const std::string& field,
                              const std::string& what) {
        std::string out = file;
        if (line > 0) out += ":" + std::to_string(line);
        if (!field.empty()) out += " [" + field + "]";
        return out + ": " + what;
    }

    std::string file_;
    std::size_t line_;
    std::string field_;
};

/// Input parsed but violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// A stored artifact contradicts itself (e.g. trace outcome vs. turns).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Network, HTTP status or response-body failure after transport retries.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts)
        : Error(what), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

} // namespace coder_consensus
