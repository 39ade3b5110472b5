#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qnopt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ArgumentError : Error {
  using Error::Error;
};

// y^T s <= 0 in a BFGS-style update; callers decide skip/abort.
struct CurvatureError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  DivergenceError(std::size_t epoch, std::size_t iteration, const std::string& what)
      : Error(what), epoch(epoch), iteration(iteration) {}
  std::size_t epoch;
  std::size_t iteration;
};

struct IoError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct SchemaError : Error {
  using Error::Error;
};

struct ModeError : Error {
  using Error::Error;
};

struct NormalizationError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

}  // namespace qnopt
