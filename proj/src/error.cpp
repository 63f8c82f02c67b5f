#include "sqlink/error.hpp"

namespace sqlink {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::config: return "config";
    case ErrorKind::budget: return "budget";
    case ErrorKind::backend: return "backend";
    case ErrorKind::tooling: return "tooling";
    case ErrorKind::unsupported: return "unsupported";
  }
  return "unknown";
}

}  // namespace sqlink
