#pragma once

#include <stdexcept>
#include <string>

namespace mehmm {

/// Malformed or inconsistent input: bad files, bad flags, violated preconditions.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite or otherwise unusable value.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mehmm
