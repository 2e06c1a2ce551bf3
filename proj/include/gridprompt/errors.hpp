#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridprompt {

/// Structural problem in a grid (dangling reference, broken invariant).
class GridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnsupportedFeatureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ScoringError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SizingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Endpoint failures.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AuthError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gridprompt
