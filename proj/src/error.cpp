#include "error.hpp"

namespace csf {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::config: return "config error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::numerical: return "numerical failure";
    case ErrorCode::usage: return "usage error";
    case ErrorCode::range: return "range error";
    case ErrorCode::domain: return "domain error";
    case ErrorCode::version: return "version mismatch";
  }
  return "error";
}

}  // namespace csf
