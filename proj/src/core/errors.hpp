#pragma once

#include <stdexcept>
#include <string>

namespace hahog {

// Values mirror hahog_status in include/hahog/hahog.h.
enum class ErrorCode : int {
  InvalidArgument = 1,
  Io = 2,
  MalformedHeader = 3,
  TruncatedPayload = 4,
  MissingSidecar = 5,
  Format = 6,
  Config = 7,
  Dimension = 8,
  Bounds = 9,
  NotFound = 10,
  Conflict = 11,
  EmptyClass = 12,
  Generation = 13,
  Internal = 14,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace hahog
