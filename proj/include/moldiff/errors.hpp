//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_ERRORS_HPP_
#define MOLDIFF_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace moldiff {

// Coarse failure families. The CLI maps these to process exit codes
// (config=2, io=3, data=4, numerical=5); library code throws Error for
// conditions that are programmer or environment misuse rather than an
// expected, recoverable outcome of the operation.
enum class ErrorKind {
  kConfig,
  kIo,
  kData,
  kNumerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& m) { return Error(ErrorKind::kConfig, m); }
inline Error io_error(const std::string& m) { return Error(ErrorKind::kIo, m); }
inline Error data_error(const std::string& m) { return Error(ErrorKind::kData, m); }
inline Error numerical_error(const std::string& m) { return Error(ErrorKind::kNumerical, m); }

// Minimal expected-style result for operations whose failure is a normal,
// typed outcome (e.g. parsing untrusted text). Kept deliberately small;
// std::expected is not available on this toolchain.
template <typename T, typename E>
class Result {
 public:
  Result(T value) : data_(std::in_place_index<0>, std::move(value)) {}
  Result(E error) : data_(std::in_place_index<1>, std::move(error)) {}

  bool ok() const { return data_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<0>(data_); }
  const T& value() const& { return std::get<0>(data_); }
  T&& value() && { return std::get<0>(std::move(data_)); }

  E& error() & { return std::get<1>(data_); }
  const E& error() const& { return std::get<1>(data_); }

  // Unwraps or throws the converted error; E must expose to_error().
  T take_or_throw() && {
    if (!ok()) throw std::get<1>(data_).to_error();
    return std::get<0>(std::move(data_));
  }

 private:
  std::variant<T, E> data_;
};

}  // namespace moldiff

#endif  // MOLDIFF_ERRORS_HPP_
