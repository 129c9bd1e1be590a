#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace edgehub {

enum class Errc {
  parse_error,
  unsupported_event,
  validation,
  encoding,
  clock_regression,
  not_found,
  ordering,
  duplicate,
  io,
  malformed,
  unavailable,
  degraded,
};

const char* errc_name(Errc c);

struct Error {
  Errc code;
  std::string message;
};

inline Error make_error(Errc code, std::string message) {
  return Error{code, std::move(message)};
}

/// Minimal expected-style carrier: holds either a T or an Error.
template <typename T>
class [[nodiscard]] Result {
public:
  Result(T value) : v_(std::move(value)) {}
  Result(Error err) : v_(std::move(err)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() { return std::get<T>(v_); }
  const T& value() const { return std::get<T>(v_); }
  const Error& error() const { return std::get<Error>(v_); }

  T& operator*() { return value(); }
  const T& operator*() const { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

private:
  std::variant<T, Error> v_;
};

template <>
class [[nodiscard]] Result<void> {
public:
  Result() = default;
  Result(Error err) : err_(std::move(err)) {}

  bool ok() const { return !err_.has_value(); }
  explicit operator bool() const { return ok(); }
  const Error& error() const { return *err_; }

private:
  std::optional<Error> err_;
};

}  // namespace edgehub
