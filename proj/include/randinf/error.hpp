#pragma once

#include <stdexcept>
#include <string>

namespace randinf {

// Every failure raised by the library carries a short machine-readable code
// (e.g. "exceeds-enumeration-capacity") next to the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr const char* kInvalidArgument = "invalid-argument";
inline constexpr const char* kCapacity = "exceeds-enumeration-capacity";
inline constexpr const char* kHypothesis = "unsupported-hypothesis";
inline constexpr const char* kDegenerateArm = "degenerate-arm";
inline constexpr const char* kParse = "parse-error";
inline constexpr const char* kIo = "io-error";
}  // namespace errc

}  // namespace randinf
