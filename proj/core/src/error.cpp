#include "vigtext/error.hpp"

namespace vigtext {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "invalid-argument";
    case Errc::kNotFound: return "not-found";
    case Errc::kMalformed: return "malformed";
    case Errc::kTruncated: return "truncated";
    case Errc::kUnsupported: return "unsupported";
    case Errc::kSchema: return "schema";
    case Errc::kVersion: return "version";
    case Errc::kIo: return "io";
    case Errc::kTransport: return "transport";
    case Errc::kHttpStatus: return "http-status";
    case Errc::kProtocol: return "protocol";
    case Errc::kDimensionMismatch: return "dimension-mismatch";
    case Errc::kStaleCache: return "stale-cache";
    case Errc::kNumeric: return "numeric";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument:
      return 1;
    case Errc::kTransport:
    case Errc::kHttpStatus:
    case Errc::kProtocol:
      return 3;
    case Errc::kNumeric:
      return 4;
    default:
      return 2;
  }
}

}  // namespace vigtext
