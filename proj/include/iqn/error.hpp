#pragma once

#include <stdexcept>
#include <string>

namespace iqn {

// Base for every error raised by the library. Callers that only care about
// "something was wrong with my input" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (tau outside
// [0,1], negative kappa, quantile at u = 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Misuse of a stateful object, e.g. backward before forward or stepping a
// finished episode.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace iqn
