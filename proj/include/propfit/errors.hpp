#pragma once

#include <stdexcept>
#include <string>

namespace propfit {

// Base for every failure the library reports. Callers that only need to know
// "this fit/replicate could not be computed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model evaluated outside its guard region (e.g. zero scale parameter).
class DomainError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// J'J (or a Newton / information matrix) is numerically singular.
class SingularError : public Error {
 public:
  using Error::Error;
};

// Some f(x_i, theta) == 0, so J_i = grad f / f is undefined.
class ZeroMeanError : public Error {
 public:
  using Error::Error;
};

// Data-weighted least squares needs every y_i > 0.
class ZeroResponseError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Dataset does not satisfy a fit precondition (n <= p, empty, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class NoBracketError : public Error {
 public:
  using Error::Error;
};

class TangencyError : public Error {
 public:
  using Error::Error;
};

// Fit mode not meaningful for the requested estimator.
class ModeError : public Error {
 public:
  using Error::Error;
};

// Malformed CSV / JSON configuration supplied by a user.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace propfit
