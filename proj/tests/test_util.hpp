#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgjmap/sgjmap.hpp"

namespace testutil {

/// Hand-rolled generators over the library's portable RNG.
struct Gen {
  sgjmap::Rng rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1)) %
                    (hi - lo + 1);
  }
  std::vector<float> noise(std::size_t n, double scale = 0.3) {
    std::vector<float> x(n);
    for (auto& v : x) v = static_cast<float>(scale * rng.gaussian());
    return x;
  }
  std::vector<double> noise_d(std::size_t n, double scale = 1.0) {
    std::vector<double> x(n);
    for (auto& v : x) v = scale * rng.gaussian();
    return x;
  }
};

inline sgjmap::AudioBuffer tone(double hz, double seconds, int fs, double amp = 0.5) {
  sgjmap::AudioBuffer b;
  b.sample_rate_hz = fs;
  b.samples.resize(static_cast<std::size_t>(std::llround(seconds * fs)));
  for (std::size_t n = 0; n < b.size(); ++n) {
    b.samples[n] = static_cast<float>(amp * std::sin(2.0 * M_PI * hz * n / fs));
  }
  return b;
}

inline sgjmap::AudioBuffer add(const sgjmap::AudioBuffer& a, const sgjmap::AudioBuffer& b,
                               double gain = 1.0) {
  sgjmap::AudioBuffer out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.samples[i] += static_cast<float>(gain * b.samples[i]);
  }
  return out;
}

inline double rms(std::span<const float> x) {
  double s = 0.0;
  for (float v : x) s += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sgjmap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
