#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sgjmap/error.hpp"
#include "sgjmap/fft.hpp"

namespace sgjmap {

enum class WindowKind { Hann, Rectangular };

/// Periodic Hann: w[n] = 0.5 - 0.5 cos(2 pi n / N).
inline std::vector<double> make_window(WindowKind kind, std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (kind == WindowKind::Hann) {
    for (std::size_t n = 0; n < length; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(length));
    }
  }
  return w;
}

struct StftConfig {
  std::size_t frame_len = 320;
  std::size_t hop = 160;
  std::size_t fft_size = 512;
  WindowKind window = WindowKind::Hann;

  /// Frame of `frame_ms` (rounded up to an even sample count), 50% hop, and
  /// the next power-of-two FFT.
  static StftConfig for_rate(int sample_rate_hz, double frame_ms = 20.0) {
    if (sample_rate_hz <= 0 || !(frame_ms > 0.0)) {
      detail::fail(Errc::InvalidConfig, "rate and frame length must be positive");
    }
    auto len = static_cast<std::size_t>(
        std::llround(frame_ms * 1e-3 * static_cast<double>(sample_rate_hz)));
    len = std::max<std::size_t>(2, len + (len & 1U));
    return StftConfig{len, len / 2, std::bit_ceil(len), WindowKind::Hann};
  }

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }

  /// Per-phase sum of overlapping windows over one hop period.
  std::vector<double> overlap_sum() const {
    const auto w = make_window(window, frame_len);
    std::vector<double> sum(hop, 0.0);
    for (std::size_t n = 0; n < frame_len; ++n) sum[n % hop] += w[n];
    return sum;
  }

  /// Throws InvalidConfig unless the geometry is consistent and the window
  /// overlap sum is constant (COLA).
  void validate() const {
    if (hop == 0 || hop > frame_len || frame_len > fft_size) {
      detail::fail(Errc::InvalidConfig, "require 0 < hop <= frame_len <= fft_size");
    }
    if (!std::has_single_bit(fft_size)) {
      detail::fail(Errc::InvalidConfig, "fft_size must be a power of two");
    }
    const auto sum = overlap_sum();
    const auto [lo, hi] = std::minmax_element(sum.begin(), sum.end());
    if (*hi - *lo > 1e-10 * *hi) {
      detail::fail(Errc::InvalidConfig, "window/hop pair is not COLA");
    }
  }

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

/// One-sided spectrum of one analysis frame.
struct SpectralFrame {
  std::vector<std::complex<double>> bins;
  std::size_t index = 0;

  std::size_t size() const noexcept { return bins.size(); }
  double power(std::size_t k) const noexcept { return std::norm(bins[k]); }
  double magnitude(std::size_t k) const noexcept { return std::abs(bins[k]); }
  double phase(std::size_t k) const noexcept { return std::arg(bins[k]); }
};

/// Frame-level analysis/synthesis engine. Owns its FFT scratch, so one
/// instance must not be shared between threads.
class Stft {
 public:
  explicit Stft(const StftConfig& config)
      : config_((config.validate(), config)),
        window_(make_window(config.window, config.frame_len)),
        fft_(config.fft_size),
        scratch_(config.fft_size, 0.0) {}

  const StftConfig& config() const noexcept { return config_; }
  std::span<const double> window() const noexcept { return window_; }

  /// Windows `frame_len` samples, zero-pads, and returns the one-sided DFT.
  template <std::floating_point T>
  SpectralFrame analyze_frame(std::span<const T> samples, std::size_t index) {
    if (samples.size() < config_.frame_len) {
      detail::fail(Errc::InsufficientSamples, "short analysis frame");
    }
    for (std::size_t n = 0; n < config_.frame_len; ++n) {
      scratch_[n] = static_cast<double>(samples[n]) * window_[n];
    }
    SpectralFrame frame;
    frame.index = index;
    frame.bins.resize(config_.bins());
    fft_.forward(std::span<const double>(scratch_.data(), config_.frame_len),
                 frame.bins);
    frame.bins.front().imag(0.0);
    frame.bins.back().imag(0.0);
    return frame;
  }

  /// Inverse DFT truncated to `frame_len` samples (no synthesis window).
  void synthesize_frame(const SpectralFrame& frame, std::span<double> out) {
    if (frame.size() != config_.bins()) {
      detail::fail(Errc::ConfigMismatch, "frame has " + std::to_string(frame.size()) +
                                             " bins, expected " +
                                             std::to_string(config_.bins()));
    }
    fft_.inverse(frame.bins, scratch_);
    std::copy_n(scratch_.begin(), std::min(out.size(), config_.frame_len), out.begin());
  }

 private:
  StftConfig config_;
  std::vector<double> window_;
  RealFft fft_;
  std::vector<double> scratch_;
};

/// Frame lambda covers samples [lambda*hop, lambda*hop + frame_len).
template <std::floating_point T>
std::vector<SpectralFrame> analyze(std::span<const T> samples, const StftConfig& config) {
  Stft stft(config);
  if (samples.size() < config.frame_len) {
    detail::fail(Errc::InsufficientSamples,
                 "need at least " + std::to_string(config.frame_len) + " samples");
  }
  const std::size_t count = (samples.size() - config.frame_len) / config.hop + 1;
  std::vector<SpectralFrame> frames;
  frames.reserve(count);
  for (std::size_t f = 0; f < count; ++f) {
    frames.push_back(stft.analyze_frame(samples.subspan(f * config.hop), f));
  }
  return frames;
}

template <std::floating_point T>
std::vector<SpectralFrame> analyze(const std::vector<T>& samples, const StftConfig& config) {
  return analyze(std::span<const T>(samples), config);
}

/// Overlap-adds the inverse transforms and divides by the accumulated
/// window sum. Samples with (near) zero window coverage are left at zero;
/// only the region covered by frame_len/hop frames reconstructs exactly.
inline std::vector<double> synthesize(std::span<const SpectralFrame> frames,
                                      const StftConfig& config) {
  if (frames.empty()) return {};
  Stft stft(config);
  const std::size_t length = (frames.size() - 1) * config.hop + config.frame_len;
  std::vector<double> out(length, 0.0);
  std::vector<double> weight(length, 0.0);
  std::vector<double> block(config.frame_len);
  const auto window = stft.window();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    stft.synthesize_frame(frames[f], block);
    const std::size_t at = f * config.hop;
    for (std::size_t n = 0; n < config.frame_len; ++n) {
      out[at + n] += block[n];
      weight[at + n] += window[n];
    }
  }
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = weight[i] > 1e-10 ? out[i] / weight[i] : 0.0;
  }
  return out;
}

}  // namespace sgjmap
