#pragma once

#include <stdexcept>
#include <string>

namespace csf {

enum class ErrorCode {
  invalid_argument = 1,
  dimension,
  config,
  io,
  numerical,
  usage,
  range,
  domain,
  version,
};

const char* error_code_name(ErrorCode code) noexcept;

/// Every failure raised by the core carries a category so the C layer can
/// map it onto a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace csf
