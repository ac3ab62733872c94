#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sgjmap {

enum class Errc {
  InvalidArgument,
  MalformedWav,
  UnsupportedFormat,
  EmptyAudio,
  IoFailure,
  InvalidConfig,
  InsufficientSamples,
  ConfigMismatch,
  NoFrames,
  NotInitialized,
  NonFiniteInput,
  RateMismatch,
  SilentClean,
  TooShort,
  LengthMismatch,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::MalformedWav: return "MalformedWav";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::EmptyAudio: return "EmptyAudio";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::NoFrames: return "NoFrames";
    case Errc::NotInitialized: return "NotInitialized";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::RateMismatch: return "RateMismatch";
    case Errc::SilentClean: return "SilentClean";
    case Errc::TooShort: return "TooShort";
    case Errc::LengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error category.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

namespace detail {
[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}
}  // namespace detail

}  // namespace sgjmap
