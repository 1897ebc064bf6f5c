#pragma once

#include <stdexcept>
#include <string>

namespace duet {

enum class ErrorCode {
  kInvalidArgument = 1,
  kOutOfRange = 2,
  kIo = 3,
  kFormat = 4,
  kNumerical = 5,
  kIncompatible = 6,
  kMissingInput = 7,
  kUnbalancedMarker = 8,
  kInternal = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace duet
