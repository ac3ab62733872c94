#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sgjmap/error.hpp"
#include "sgjmap/stft.hpp"

namespace sgjmap {

constexpr double kDefaultPsdFloor = 1e-12;
constexpr double kDefaultNoiseSmoothing = 0.98;

/// Per-bin noise power (amplitude^2 units).
struct NoiseEstimate {
  std::vector<double> psd;
  std::size_t frames_seen = 0;
  bool initialized = false;
  double floor = kDefaultPsdFloor;
};

enum class VadDecision { Noise, Speech };

struct VadConfig {
  double threshold = 0.2;  // mean per-bin log-likelihood ratio
  int hangover_frames = 8;
};

struct VadState {
  VadDecision decision = VadDecision::Noise;
  int hangover_remaining = 0;
};

/// Running mean of |Y_k|^2 over the noise-only start-up frames.
class NoiseInitializer {
 public:
  explicit NoiseInitializer(double floor = kDefaultPsdFloor) : floor_(floor) {}

  void add(const SpectralFrame& frame) {
    if (sum_.empty()) sum_.assign(frame.size(), 0.0);
    if (frame.size() != sum_.size()) {
      detail::fail(Errc::ConfigMismatch, "noise frames differ in bin count");
    }
    for (std::size_t k = 0; k < sum_.size(); ++k) sum_[k] += frame.power(k);
    ++count_;
  }

  std::size_t count() const noexcept { return count_; }

  NoiseEstimate finish() const {
    if (count_ == 0) detail::fail(Errc::NoFrames, "noise initialization needs frames");
    NoiseEstimate est;
    est.floor = floor_;
    est.frames_seen = count_;
    est.initialized = true;
    est.psd.resize(sum_.size());
    const double n = static_cast<double>(count_);
    for (std::size_t k = 0; k < sum_.size(); ++k) {
      est.psd[k] = std::max(sum_[k] / n, floor_);
    }
    return est;
  }

  void clear() {
    sum_.clear();
    count_ = 0;
  }

 private:
  double floor_;
  std::vector<double> sum_;
  std::size_t count_ = 0;
};

inline NoiseEstimate init_noise(std::span<const SpectralFrame> frames,
                                double floor = kDefaultPsdFloor) {
  NoiseInitializer init(floor);
  for (const auto& f : frames) init.add(f);
  return init.finish();
}

namespace detail {
inline void require_initialized(const NoiseEstimate& noise, std::size_t bins) {
  if (!noise.initialized) fail(Errc::NotInitialized, "noise estimate not initialized");
  if (noise.psd.size() != bins) fail(Errc::ConfigMismatch, "noise/frame bin count differ");
}
}  // namespace detail

/// Mean over bins of gamma*xi/(1+xi) - ln(1+xi), gamma = |Y|^2 / psd.
inline double vad_statistic(const SpectralFrame& frame, const NoiseEstimate& noise,
                            std::span<const double> xi) {
  detail::require_initialized(noise, frame.size());
  if (xi.size() != frame.size()) {
    detail::fail(Errc::ConfigMismatch, "xi/frame bin count differ");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const double gamma = frame.power(k) / noise.psd[k];
    acc += gamma * xi[k] / (1.0 + xi[k]) - std::log1p(xi[k]);
  }
  return acc / static_cast<double>(frame.size());
}

/// Threshold test with hangover: a raw hit reloads the hangover counter,
/// a miss spends one frame of it.
inline VadState vad_decide(double statistic, VadState state, const VadConfig& config = {}) {
  if (statistic > config.threshold) {
    state.hangover_remaining = config.hangover_frames;
    state.decision = VadDecision::Speech;
  } else if (state.hangover_remaining > 0) {
    --state.hangover_remaining;
    state.decision = VadDecision::Speech;
  } else {
    state.decision = VadDecision::Noise;
  }
  return state;
}

/// Recursive averaging during noise frames; frozen during speech.
inline NoiseEstimate update_noise(NoiseEstimate noise, const SpectralFrame& frame,
                                  VadDecision decision,
                                  double smoothing = kDefaultNoiseSmoothing) {
  detail::require_initialized(noise, frame.size());
  if (decision == VadDecision::Noise) {
    for (std::size_t k = 0; k < frame.size(); ++k) {
      noise.psd[k] = smoothing * noise.psd[k] + (1.0 - smoothing) * frame.power(k);
    }
  }
  for (double& p : noise.psd) {
    p = std::isfinite(p) ? std::max(p, noise.floor) : noise.floor;
  }
  ++noise.frames_seen;
  return noise;
}

}  // namespace sgjmap
