#pragma once

#include <stdexcept>
#include <string>

namespace minaf {

/// Precondition violated by the caller (bad shape, out-of-range argument).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A metric that cannot be computed for the given signal (e.g. the decay
/// curve never reaches the required level).
class NotMeasurable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, malformed, or inconsistent files on disk.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient encountered during optimization.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

}  // namespace minaf
