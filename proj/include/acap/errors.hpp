#pragma once

#include <stdexcept>
#include <string>

namespace acap {

/// Input outside the mathematical domain of an operation (bad coordinates,
/// empty inputs, k larger than the point count, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed textual input: geohash strings, CSV cells, JSON documents.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geohash cells touching a pole or the antimeridian; neighbor lookups there
/// are rejected rather than wrapped.
class UnsupportedRegionError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Invalid run configuration or missing input files. The CLI maps this to
/// exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feature construction was handed events from outside the training window.
class LeakageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A model was used in a state it does not support yet (e.g. evaluation-mode
/// batch norm before any training pass).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace acap
