#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gearkv {

enum class ErrorCode {
  kShape,
  kInvalidConfig,
  kFormat,
  kIo,
  kNonFinite,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as this exception. The code is
// stable and is what the CLI prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gearkv
