#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace convkit {

/// Base class for every error raised by the toolkit. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input at a known location.
class ParseError : public Error {
  public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), m_line(line)
    {}

    std::size_t line() const noexcept { return m_line; }

  private:
    std::size_t m_line;
};

/// A domain invariant does not hold (bad turn numbering, duplicate ids, ...).
class InvariantError : public Error {
  public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

}  // namespace convkit
