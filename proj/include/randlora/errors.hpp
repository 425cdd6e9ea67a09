#pragma once

#include <stdexcept>
#include <string>

namespace randlora {

/// Base class of every error raised by the library. Messages are prefixed
/// with the failing "module::operation" so CLI diagnostics stay traceable.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class SparsityError : public Error { using Error::Error; };
class SliceError : public Error { using Error::Error; };
class NumericalError : public Error { using Error::Error; };
class FitDivergenceError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class GeometryError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };

/// Bad command line or configuration; maps to exit code 2 in the CLI.
class UsageError : public Error { using Error::Error; };

namespace detail {

template <class E>
[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
  throw E(where + ": " + what);
}

} // namespace detail
} // namespace randlora
