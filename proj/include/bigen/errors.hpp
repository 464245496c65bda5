#pragma once

#include <stdexcept>
#include <string>

namespace bigen {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad files, mismatched shapes, invalid parameters.
class InputError : public Error {
 public:
  using Error::Error;
};

class CycleDetected : public InputError {
 public:
  CycleDetected() : InputError("graph contains a cycle") {}
};

class UnknownNode : public InputError {
 public:
  explicit UnknownNode(std::size_t id)
      : InputError("unknown node id " + std::to_string(id)) {}
};

/// Raised when a noise assignment is not keyed on the expected subgraph.
class KeyMismatch : public InputError {
 public:
  using InputError::InputError;
};

/// Numerical failure of a posterior update.
class SingularPrecision : public Error {
 public:
  explicit SingularPrecision(std::size_t node)
      : Error("posterior precision is not positive definite at node " +
              std::to_string(node)) {}
};

/// Failures inside an attribution engine.
class AttributionError : public Error {
 public:
  using Error::Error;
};

class EmptyReferencePool : public AttributionError {
 public:
  EmptyReferencePool() : AttributionError("reference pool is empty") {}
};

class TooManyPlayers : public AttributionError {
 public:
  TooManyPlayers(std::size_t players, std::size_t cap)
      : AttributionError("exact Shapley enumeration over " + std::to_string(players) +
                         " players exceeds the cap of " + std::to_string(cap) +
                         "; enable early stopping") {}
};

class DegenerateSystem : public AttributionError {
 public:
  using AttributionError::AttributionError;
};

}  // namespace bigen
