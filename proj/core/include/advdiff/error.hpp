#ifndef ADVDIFF_ERROR_HPP_
#define ADVDIFF_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace advdiff {

// Operand shapes do not agree with what an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN or Inf appeared in a computation. Training treats this as divergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration or preset name.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advdiff

#endif  // ADVDIFF_ERROR_HPP_
