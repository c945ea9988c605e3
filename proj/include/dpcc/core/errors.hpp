#pragma once

#include <stdexcept>
#include <string>

namespace dpcc {

/// A computation produced or received a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss) or could not start.
class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A constraint set became empty, e.g. a box eroded past itself.
class EmptySetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The feasible set of a projection is provably empty.
class InfeasibleProjection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration, checkpoint or dataset file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpcc
