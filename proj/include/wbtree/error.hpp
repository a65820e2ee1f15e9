#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wbtree {

enum class ErrorCode {
  InvalidArgument,
  DegreeTooSmall,
  InfiniteRegion,
  InvalidAddress,
  Deadlock,
  InvalidForBoundary,
  LambdaExceedsWindow,
  AllTruncated,
  RadiusTooSmall,
  SpecInvalid,
};

inline constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegreeTooSmall: return "DegreeTooSmall";
    case ErrorCode::InfiniteRegion: return "InfiniteRegion";
    case ErrorCode::InvalidAddress: return "InvalidAddress";
    case ErrorCode::Deadlock: return "Deadlock";
    case ErrorCode::InvalidForBoundary: return "InvalidForBoundary";
    case ErrorCode::LambdaExceedsWindow: return "LambdaExceedsWindow";
    case ErrorCode::AllTruncated: return "AllTruncated";
    case ErrorCode::RadiusTooSmall: return "RadiusTooSmall";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wbtree
