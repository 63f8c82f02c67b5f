#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sqlink {

enum class ErrorKind {
  io,
  parse,        // malformed input text (JSON, SQL, CSV)
  validation,   // well-formed input violating a domain invariant
  config,
  budget,       // token budget cannot be met
  backend,
  tooling,      // external helper (tokenizer command) failed
  unsupported,  // SQL construct outside the supported grammar
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// SQL syntax / unsupported-construct error. Carries the offending token and
// its byte offset in the statement.
class SqlError : public Error {
 public:
  SqlError(std::string message, std::size_t offset, std::string token)
      : Error(ErrorKind::unsupported, std::move(message)),
        offset_(offset),
        token_(std::move(token)) {}

  std::size_t offset() const { return offset_; }
  const std::string& token() const { return token_; }

 private:
  std::size_t offset_;
  std::string token_;
};

}  // namespace sqlink
