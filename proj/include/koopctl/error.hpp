#pragma once

#include <stdexcept>
#include <string>

namespace koopctl {

/// Failure category. The CLI maps these onto process exit codes.
enum class error_kind {
  validation, ///< malformed input, bad arguments, violated preconditions
  io,         ///< unreadable or unwritable file
  numerical,  ///< degenerate data, non-finite intermediates, solver failure
};

class error : public std::runtime_error {
public:
  error(error_kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] error_kind kind() const noexcept { return kind_; }

private:
  error_kind kind_;
};

class validation_error : public error {
public:
  explicit validation_error(const std::string& what) : error(error_kind::validation, what) {}
};

class io_error : public error {
public:
  explicit io_error(const std::string& what) : error(error_kind::io, what) {}
};

class numerical_error : public error {
public:
  explicit numerical_error(const std::string& what) : error(error_kind::numerical, what) {}
};

} // namespace koopctl
