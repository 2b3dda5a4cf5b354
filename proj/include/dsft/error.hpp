#pragma once

#include <stdexcept>
#include <string>

namespace dsft {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Internal = 1,
  Input = 2,
  SelfCheck = 3,
  Integrity = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& what) { return Error(ErrorKind::Input, what); }
inline Error integrity_error(const std::string& what) { return Error(ErrorKind::Integrity, what); }
inline Error internal_error(const std::string& what) { return Error(ErrorKind::Internal, what); }

}  // namespace dsft
