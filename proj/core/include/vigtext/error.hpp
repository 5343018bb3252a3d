#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vigtext {

// Error categories. Each maps onto one CLI exit code (see exit_code_for).
enum class Errc {
  kInvalidArgument,
  kNotFound,
  kMalformed,
  kTruncated,
  kUnsupported,
  kSchema,
  kVersion,
  kIo,
  kTransport,
  kHttpStatus,
  kProtocol,
  kDimensionMismatch,
  kStaleCache,
  kNumeric,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// 1 usage (invalid argument), 2 data, 3 provider, 4 numeric.
int exit_code_for(Errc code);

}  // namespace vigtext
