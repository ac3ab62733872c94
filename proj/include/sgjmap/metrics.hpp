#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "sgjmap/audio_io.hpp"
#include "sgjmap/error.hpp"
#include "sgjmap/fft.hpp"

namespace sgjmap {

struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Non-overlapping frames of `frame_len` samples (the tail frame may be
/// shorter) whose energy lies within `range_db` of the loudest frame.
inline std::vector<SampleRange> active_frames(std::span<const float> reference,
                                              std::size_t frame_len, double range_db = 40.0) {
  std::vector<SampleRange> frames;
  std::vector<double> energy;
  for (std::size_t at = 0; at < reference.size(); at += frame_len) {
    const std::size_t end = std::min(reference.size(), at + frame_len);
    double e = 0.0;
    for (std::size_t i = at; i < end; ++i) e += static_cast<double>(reference[i]) * reference[i];
    frames.push_back({at, end});
    energy.push_back(e);
  }
  const double peak = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());
  std::vector<SampleRange> active;
  if (!(peak > 0.0)) return active;
  const double threshold = peak * std::pow(10.0, -range_db / 10.0);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (energy[f] > threshold) active.push_back(frames[f]);
  }
  return active;
}

inline std::size_t metric_frame_len(int sample_rate_hz) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.020 * sample_rate_hz)));
}

/// SNR of `mixture` against `clean`, measured over the active region of
/// `clean` (the residual mixture - clean is treated as noise).
inline double active_snr_db(const AudioBuffer& clean, const AudioBuffer& mixture) {
  if (clean.size() != mixture.size()) detail::fail(Errc::LengthMismatch, "length differs");
  const auto active = active_frames(clean.samples, metric_frame_len(clean.sample_rate_hz));
  if (active.empty()) detail::fail(Errc::SilentClean, "clean reference has no active frames");
  double signal = 0.0;
  double noise = 0.0;
  for (const auto& r : active) {
    for (std::size_t i = r.begin; i < r.end; ++i) {
      const double c = clean.samples[i];
      const double e = static_cast<double>(mixture.samples[i]) - c;
      signal += c * c;
      noise += e * e;
    }
  }
  return 10.0 * std::log10(signal / noise);
}

struct MixResult {
  AudioBuffer mixture;
  AudioBuffer clean;  // clean component after peak normalization
  AudioBuffer noise;  // noise component after scaling and normalization
  double noise_scale = 1.0;    // applied to the raw noise before normalization
  double normalization = 1.0;  // applied to the sum, <= 1
};

/// Adds `noise` (tiled or truncated to the clean length) to `clean` at
/// `snr_db`, both powers measured over the clean active region, then
/// scales everything so the mixture peak is at most 0.99.
inline MixResult mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db) {
  if (clean.sample_rate_hz != noise.sample_rate_hz) {
    detail::fail(Errc::RateMismatch, "clean and noise rates differ");
  }
  if (!std::isfinite(snr_db)) detail::fail(Errc::InvalidArgument, "snr_db must be finite");
  if (clean.empty() || noise.empty()) detail::fail(Errc::EmptyAudio, "empty input");

  const std::size_t n = clean.size();
  std::vector<double> tiled(n);
  for (std::size_t i = 0; i < n; ++i) tiled[i] = noise.samples[i % noise.size()];

  const auto active = active_frames(clean.samples, metric_frame_len(clean.sample_rate_hz));
  if (active.empty()) detail::fail(Errc::SilentClean, "clean signal has no active region");
  double p_clean = 0.0;
  double p_noise = 0.0;
  for (const auto& r : active) {
    for (std::size_t i = r.begin; i < r.end; ++i) {
      p_clean += static_cast<double>(clean.samples[i]) * clean.samples[i];
      p_noise += tiled[i] * tiled[i];
    }
  }
  if (!(p_noise > 0.0)) detail::fail(Errc::InvalidArgument, "noise is silent over active region");

  MixResult r;
  r.noise_scale = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    peak = std::max(peak, std::abs(clean.samples[i] + r.noise_scale * tiled[i]));
  }
  r.normalization = peak > 0.99 ? 0.99 / peak : 1.0;

  for (AudioBuffer* b : {&r.mixture, &r.clean, &r.noise}) {
    b->sample_rate_hz = clean.sample_rate_hz;
    b->samples.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double c = r.normalization * clean.samples[i];
    const double w = r.normalization * r.noise_scale * tiled[i];
    r.clean.samples[i] = static_cast<float>(c);
    r.noise.samples[i] = static_cast<float>(w);
    r.mixture.samples[i] = static_cast<float>(c + w);
  }
  return r;
}

/// Mean over active 20 ms frames of the per-frame SNR, each clamped to
/// [-10, 35] dB.
inline double segmental_snr(const AudioBuffer& clean, const AudioBuffer& processed) {
  if (clean.size() != processed.size()) detail::fail(Errc::LengthMismatch, "length differs");
  if (clean.sample_rate_hz != processed.sample_rate_hz) {
    detail::fail(Errc::RateMismatch, "rates differ");
  }
  constexpr double kLo = -10.0;
  constexpr double kHi = 35.0;
  const auto active = active_frames(clean.samples, metric_frame_len(clean.sample_rate_hz));
  if (active.empty()) detail::fail(Errc::SilentClean, "clean reference has no active frames");
  double total = 0.0;
  for (const auto& r : active) {
    double signal = 0.0;
    double error = 0.0;
    for (std::size_t i = r.begin; i < r.end; ++i) {
      const double c = clean.samples[i];
      const double e = c - static_cast<double>(processed.samples[i]);
      signal += c * c;
      error += e * e;
    }
    const double snr = error > 0.0 ? 10.0 * std::log10(signal / error) : kHi;
    total += std::clamp(snr, kLo, kHi);
  }
  return total / static_cast<double>(active.size());
}

namespace detail::stoi_impl {

constexpr int kRate = 10000;
constexpr std::size_t kFrame = 256;
constexpr std::size_t kFft = 512;
constexpr std::size_t kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr std::size_t kSegment = 30;  // 384 ms of 128-sample hops
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = DBL_EPSILON;

// Symmetric Hann without its zero end points (MATLAB hanning(N)).
inline std::vector<double> hanning(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) /
                                static_cast<double>(n + 1));
  }
  return w;
}

// Frames start at 0, hop, ... strictly before len - frame.
inline std::size_t frame_count(std::size_t len, std::size_t frame, std::size_t hop) {
  return len > frame ? (len - frame - 1) / hop + 1 : 0;
}

inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::size_t hop = kFrame / 2;
  const auto w = hanning(kFrame);
  const std::size_t frames = frame_count(x.size(), kFrame, hop);
  std::vector<double> energy_db(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double e = 0.0;
    for (std::size_t n = 0; n < kFrame; ++n) {
      const double v = w[n] * x[f * hop + n];
      e += v * v;
    }
    energy_db[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double peak =
      frames ? *std::max_element(energy_db.begin(), energy_db.end()) : 0.0;
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < frames; ++f) {
    if (peak - kDynRange - energy_db[f] < 0.0) keep.push_back(f);
  }
  const std::size_t len = keep.empty() ? 0 : (keep.size() - 1) * hop + kFrame;
  std::vector<double> xs(len, 0.0);
  std::vector<double> ys(len, 0.0);
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const std::size_t src = keep[j] * hop;
    const std::size_t dst = j * hop;
    for (std::size_t n = 0; n < kFrame; ++n) {
      xs[dst + n] += w[n] * x[src + n];
      ys[dst + n] += w[n] * y[src + n];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// One-third octave band matrix as [first, last) bin ranges.
inline std::vector<SampleRange> third_octave_bands() {
  std::vector<double> f(kFft / 2 + 1);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = static_cast<double>(i) * kRate / static_cast<double>(kFft);
  }
  auto nearest = [&](double freq) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < f.size(); ++i) {
      if ((f[i] - freq) * (f[i] - freq) < (f[best] - freq) * (f[best] - freq)) best = i;
    }
    return best;
  };
  std::vector<SampleRange> bands(kBands);
  for (std::size_t b = 0; b < kBands; ++b) {
    const double k = static_cast<double>(b);
    bands[b].begin = nearest(kMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0));
    bands[b].end = nearest(kMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0));
  }
  return bands;
}

// Band envelopes [band][frame].
inline std::vector<std::vector<double>> band_envelopes(std::span<const double> x,
                                                       std::span<const SampleRange> bands) {
  const std::size_t hop = kFrame / 2;
  const auto w = hanning(kFrame);
  const std::size_t frames = frame_count(x.size(), kFrame, hop);
  RealFft fft(kFft);
  std::vector<double> block(kFrame);
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<std::vector<double>> env(bands.size(), std::vector<double>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t n = 0; n < kFrame; ++n) block[n] = w[n] * x[f * hop + n];
    fft.forward(block, spec);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      double e = 0.0;
      for (std::size_t k = bands[b].begin; k < bands[b].end; ++k) e += std::norm(spec[k]);
      env[b][f] = std::sqrt(e);
    }
  }
  return env;
}

inline std::vector<double> to_10k(const AudioBuffer& a) {
  const AudioBuffer r = resample(a, kRate);
  return {r.samples.begin(), r.samples.end()};
}

}  // namespace detail::stoi_impl

/// Short-time objective intelligibility of `processed` against `clean`.
/// Not symmetric in its arguments; invariant to positive scaling of
/// `processed`. The result is clamped to [0, 1].
inline double stoi(const AudioBuffer& clean, const AudioBuffer& processed) {
  namespace s = detail::stoi_impl;
  if (clean.size() != processed.size()) detail::fail(Errc::LengthMismatch, "length differs");
  if (clean.sample_rate_hz != processed.sample_rate_hz) {
    detail::fail(Errc::RateMismatch, "rates differ");
  }
  if (clean.duration_seconds() < 0.384) detail::fail(Errc::TooShort, "need at least 384 ms");

  auto x = s::to_10k(clean);
  auto y = s::to_10k(processed);
  s::remove_silent_frames(x, y);

  const auto bands = s::third_octave_bands();
  const auto xb = s::band_envelopes(x, bands);
  const auto yb = s::band_envelopes(y, bands);
  const std::size_t frames = xb.front().size();
  if (frames < s::kSegment) {
    detail::fail(Errc::TooShort, "fewer than 384 ms of non-silent audio");
  }

  const double clip = std::pow(10.0, -s::kBeta / 20.0);
  const std::size_t segments = frames - s::kSegment + 1;
  const std::size_t n = s::kSegment;
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  double total = 0.0;
  for (std::size_t m = 0; m < segments; ++m) {
    for (std::size_t b = 0; b < bands.size(); ++b) {
      double nx = 0.0;
      double ny = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        xs[t] = xb[b][m + t];
        ys[t] = yb[b][m + t];
        nx += xs[t] * xs[t];
        ny += ys[t] * ys[t];
      }
      const double gain = std::sqrt(nx) / (std::sqrt(ny) + s::kEps);
      double mx = 0.0;
      double my = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        ys[t] = std::min(ys[t] * gain, xs[t] * (1.0 + clip));
        mx += xs[t];
        my += ys[t];
      }
      mx /= static_cast<double>(n);
      my /= static_cast<double>(n);
      double sxx = 0.0;
      double syy = 0.0;
      double sxy = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double dx = xs[t] - mx;
        const double dy = ys[t] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
      }
      total += sxy / ((std::sqrt(sxx) + s::kEps) * (std::sqrt(syy) + s::kEps));
    }
  }
  const double d = total / static_cast<double>(segments * bands.size());
  return std::clamp(d, 0.0, 1.0);
}

}  // namespace sgjmap
