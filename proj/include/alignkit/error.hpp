#pragma once

#include <stdexcept>
#include <string>

namespace alignkit {

// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kValidation = 1,  // invariant, precondition or metric-domain failure
  kIo = 2,
  kBackend = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, bool retryable = false)
      : std::runtime_error(what), kind_(kind), retryable_(retryable) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept { return retryable_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
  bool retryable_;
};

inline Error ValidationError(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}
inline Error IoError(const std::string& what) {
  return Error(ErrorKind::kIo, what);
}
inline Error BackendError(const std::string& what, bool retryable = false) {
  return Error(ErrorKind::kBackend, what, retryable);
}

}  // namespace alignkit
