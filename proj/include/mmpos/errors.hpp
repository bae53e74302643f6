#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmpos
{

// Input outside an operation's domain (bad geometry, invalid parameters, unknown ids).
class DomainError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input file. line is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error
{
public:
  ParseError(const std::string &what, std::size_t line = 0, std::string field = {})
      : std::runtime_error(what), line_(line), field_(std::move(field))
  {
  }

  std::size_t line() const noexcept { return line_; }
  const std::string &field() const noexcept { return field_; }

private:
  std::size_t line_;
  std::string field_;
};

class DegenerateGeometryError : public DomainError
{
public:
  using DomainError::DomainError;
};

// No grid cell lies inside every anchor's estimation rectangle.
class CoverageError : public DomainError
{
public:
  using DomainError::DomainError;
};

} // namespace mmpos
