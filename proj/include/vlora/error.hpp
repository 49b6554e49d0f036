#pragma once

#include <stdexcept>
#include <string>

namespace vlora {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extents of two operands disagree, or a shape violates a type invariant.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A forward op produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Precondition of an operation was violated (bad config, bad index, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace vlora
