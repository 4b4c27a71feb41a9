#pragma once

#include <stdexcept>
#include <string>

namespace narnet {

/// Malformed input: wrong dimensions, invalid weights, unparsable files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a trustworthy answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normal equations that cannot be solved without regularization.
class SingularGramError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DataError(what);
}

}  // namespace detail
}  // namespace narnet
