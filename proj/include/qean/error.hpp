#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qean {

enum class Errc {
  DimensionMismatch,
  NotSymmetric,
  NonFiniteLoss,
  InsufficientDims,
  NotUnit,
  NotRotation,
  HeadDimNotQuaternion,
  ChannelMismatch,
  AudioTooShort,
  NonFiniteGradient,
  MalformedFile,
  MetaMismatch,
  TooFewFrames,
  TooFewItems,
  EmptyMotionBeats,
  EmptyMusicBeats,
  IoError,
  ConfigError,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the Errc kinds so callers
/// (the CLI in particular) can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace qean
