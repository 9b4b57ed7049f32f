#pragma once

#include <stdexcept>
#include <string>

namespace shapeflow {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Interface chains that are open, branching or self-intersecting.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Requested geometry cannot be meshed (overlapping loops, loops touching the outer boundary).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Mesh generation produced degenerate or non-conforming elements.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Linear solver failure, maximum-principle violation and similar.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual = -1.0)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Point evaluation outside the source mesh.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Truncated-normal rejection cap exceeded.
class SamplingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace shapeflow
