#pragma once

#include <stdexcept>
#include <string>

namespace kktsynth {

/// Base class for every error raised by the toolchain.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// problem-core
class BoundsContradiction : public Error {
 public:
  using Error::Error;
};

/// A constraint has polynomial degree > 2, or is not polynomial at all.
class DegreeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedExpression : public Error {
 public:
  using Error::Error;
};

/// Argument outside a function's domain (log of a non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

// method-compiler
class GainError : public Error {
 public:
  using Error::Error;
};

// dynamics-simulator
class Divergence : public Error {
 public:
  using Error::Error;
};

class StepUnderflow : public Error {
 public:
  using Error::Error;
};

// verify-report
class NotQp : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  using Error::Error;
};

}  // namespace kktsynth
