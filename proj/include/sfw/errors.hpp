#pragma once

#include <stdexcept>
#include <string>

namespace sfw {

/// Bad caller input: dimension mismatch, infeasible point, out-of-range value.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was called outside its precondition (e.g. an in-face oracle on an interior point).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A quantity that is nonnegative by construction came out clearly negative.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The problem does not provide the requested capability (e.g. exact gradients).
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The iterates left the finite range (typically a step size far too large for the problem).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void fail_input(const std::string& what) { throw InputError(what); }
}  // namespace detail

}  // namespace sfw
