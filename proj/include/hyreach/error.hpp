// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hyreach {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An interval operand lies wholly outside the domain of a function.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Bisection requested on a box whose dimensions are all degenerate.
class CannotSplitError : public Error {
public:
  CannotSplitError() : Error("cannot split: every dimension has zero width") {}
};

/// Operands disagree on their variable sets, or a variable is unbound.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// An argument violates a documented precondition (e.g. a negative delta).
class ArgumentError : public Error {
public:
  using Error::Error;
};

/// A validated enclosure could not be kept inside the variable bounds.
class EnclosureEscapeError : public Error {
public:
  using Error::Error;
};

/// Step-size control could not certify progress of the integration.
class StepUnderflowError : public Error {
public:
  using Error::Error;
};

/// Least-squares fit over points that share a single abscissa.
class DegenerateError : public Error {
public:
  using Error::Error;
};

/// Parameter synthesis had fewer than two usable samples.
class InsufficientDataError : public Error {
public:
  using Error::Error;
};

/// Malformed model text. Carries a 1-based source position.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, int line, int column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

private:
  int line_;
  int column_;
};

/// A model refers to a mode, variable or parameter that was never declared.
class UnknownIdentifierError : public ParseError {
public:
  using ParseError::ParseError;
};

} // namespace hyreach
