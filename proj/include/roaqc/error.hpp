#pragma once

#include <stdexcept>
#include <string>

namespace roaqc {

/// Base class for invalid-input failures (bad files, wrong shapes, violated preconditions).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Raised when the linear part of a system is not Hurwitz; the message lists the eigenvalues.
class NonHurwitzError : public Error {
 public:
  using Error::Error;
};

/// A matrix expected to be positive definite is not (or is too badly conditioned).
class NotPositiveDefiniteError : public Error {
 public:
  using Error::Error;
};

/// The eigenvalue signature of a quadratic form does not fit the requested decomposition,
/// or a bound was requested for a form with no positive eigenvalue.
class SignatureError : public Error {
 public:
  using Error::Error;
};

}  // namespace roaqc
