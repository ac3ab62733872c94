#pragma once

// Deterministic synthetic corpus: speech-like utterances (formant-shaped
// harmonic voicing, fricative bursts, word pauses) and four noise families.
// Random draws use the portable Rng below so output does not depend on the
// standard library implementation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgjmap/audio_io.hpp"
#include "sgjmap/error.hpp"

namespace sgjmap {

/// Small portable PRNG (SplitMix64) with uniform and Gaussian draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
  std::optional<double> spare_;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  Rng r(seed ^ (a * 0xD1B54A32D192ED03ULL) ^ (b * 0x8CB92BA72F3D8DD7ULL));
  return r.next();
}

enum class NoiseKind { White, Babble, Machinery, Traffic };

constexpr std::array<NoiseKind, 4> kAllNoiseKinds{NoiseKind::White, NoiseKind::Babble,
                                                  NoiseKind::Machinery, NoiseKind::Traffic};

constexpr std::string_view to_string(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::White: return "white";
    case NoiseKind::Babble: return "babble";
    case NoiseKind::Machinery: return "machinery";
    case NoiseKind::Traffic: return "traffic";
  }
  return "unknown";
}

struct SpeechShape {
  double lead_silence_s = 2.0;
  double speech_s = 2.6;
  double tail_silence_s = 0.3;
  bool pauses = true;  // false gives continuous talker streams for babble
};

namespace detail::synth {

struct Vowel {
  double f1, f2, f3;
};

constexpr std::array<Vowel, 6> kVowels{{{730, 1090, 2440},
                                        {270, 2290, 3010},
                                        {300, 870, 2240},
                                        {530, 1840, 2480},
                                        {570, 840, 2410},
                                        {660, 1720, 2410}}};

inline double resonance(double f, double centre, double bandwidth) {
  const double r = f / centre;
  const double q = f * bandwidth / (centre * centre);
  return 1.0 / std::sqrt((1.0 - r * r) * (1.0 - r * r) + q * q);
}

inline double envelope(std::size_t n, std::size_t len, std::size_t attack, std::size_t release) {
  if (n < attack) return 0.5 - 0.5 * std::cos(std::numbers::pi * n / attack);
  if (n + release > len) {
    const double t = static_cast<double>(len - n) / release;
    return 0.5 - 0.5 * std::cos(std::numbers::pi * t);
  }
  return 1.0;
}

// Voiced nucleus: harmonics of a gliding f0, amplitude-shaped by three
// formants that move from `from` to `to`.
inline void voiced(std::vector<double>& out, std::size_t at, std::size_t len, int fs,
                   double f0_start, double f0_end, Vowel from, Vowel to, double level,
                   Rng& rng) {
  constexpr std::size_t kBlock = 64;
  const double nyq_limit = std::min(5000.0, 0.45 * fs);
  const std::size_t max_h = static_cast<std::size_t>(nyq_limit / std::min(f0_start, f0_end)) + 1;
  std::vector<double> phase(max_h + 1, 0.0);
  for (auto& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> amp(max_h + 1, 0.0);
  const auto attack = static_cast<std::size_t>(0.02 * fs);
  const auto release = static_cast<std::size_t>(0.03 * fs);
  for (std::size_t b = 0; b < len; b += kBlock) {
    const double t = static_cast<double>(b) / static_cast<double>(len);
    const double f0 = f0_start + (f0_end - f0_start) * t;
    const Vowel v{from.f1 + (to.f1 - from.f1) * t, from.f2 + (to.f2 - from.f2) * t,
                  from.f3 + (to.f3 - from.f3) * t};
    for (std::size_t h = 1; h <= max_h; ++h) {
      const double f = h * f0;
      amp[h] = f < nyq_limit ? (resonance(f, v.f1, 90.0) + 0.7 * resonance(f, v.f2, 110.0) +
                                0.4 * resonance(f, v.f3, 160.0)) /
                                   std::pow(static_cast<double>(h), 0.6)
                             : 0.0;
    }
    const std::size_t end = std::min(len, b + kBlock);
    for (std::size_t n = b; n < end; ++n) {
      double s = 0.0;
      for (std::size_t h = 1; h <= max_h; ++h) {
        if (amp[h] == 0.0) continue;
        phase[h] += 2.0 * std::numbers::pi * h * f0 / fs;
        s += amp[h] * std::sin(phase[h]);
      }
      s += 0.3 * rng.gaussian();  // breathiness
      out[at + n] += level * envelope(n, len, attack, release) * s;
    }
  }
}

// Fricative: spectrally tilted-up noise burst.
inline void fricative(std::vector<double>& out, std::size_t at, std::size_t len, int fs,
                      double level, Rng& rng) {
  const auto ramp = static_cast<std::size_t>(0.01 * fs);
  double p1 = 0.0;
  double p2 = 0.0;
  for (std::size_t n = 0; n < len; ++n) {
    const double x = rng.gaussian();
    const double d1 = x - p1;
    const double d2 = d1 - p2;
    p1 = x;
    p2 = d1;
    out[at + n] += level * envelope(n, len, ramp, ramp) * d2;
  }
}

inline std::vector<double> speech_samples(Rng& rng, int fs, double seconds, bool pauses) {
  const auto total = static_cast<std::size_t>(seconds * fs);
  std::vector<double> out(total + static_cast<std::size_t>(0.5 * fs), 0.0);
  const double f0_base = rng.uniform(95.0, 210.0);
  Vowel prev = kVowels[static_cast<std::size_t>(rng.uniform(0.0, 6.0))];
  std::size_t at = 0;
  while (at < total) {
    const int syllables = 1 + static_cast<int>(rng.uniform(0.0, 3.0));
    for (int s = 0; s < syllables && at < total; ++s) {
      if (rng.uniform() < 0.4) {
        const auto len = static_cast<std::size_t>(rng.uniform(0.05, 0.11) * fs);
        fricative(out, at, std::min(len, out.size() - at), fs, rng.uniform(0.3, 0.6), rng);
        at += len * 3 / 4;
      }
      const auto len = static_cast<std::size_t>(rng.uniform(0.10, 0.26) * fs);
      const Vowel next = kVowels[static_cast<std::size_t>(rng.uniform(0.0, 6.0))];
      const double f0a = f0_base * (1.0 + rng.uniform(-0.15, 0.15));
      const double f0b = f0_base * (1.0 + rng.uniform(-0.15, 0.15));
      voiced(out, at, std::min(len, out.size() - at), fs, f0a, f0b, prev, next,
             rng.uniform(0.5, 1.0), rng);
      prev = next;
      at += len;
    }
    if (pauses) at += static_cast<std::size_t>(rng.uniform(0.06, 0.25) * fs);
  }
  out.resize(total);
  return out;
}

inline void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (double& v : x) v *= peak / m;
  }
}

inline void normalize_rms(std::vector<double>& x, double rms) {
  double e = 0.0;
  for (double v : x) e += v * v;
  e = std::sqrt(e / static_cast<double>(std::max<std::size_t>(1, x.size())));
  if (e > 0.0) {
    for (double& v : x) v *= rms / e;
  }
}

inline AudioBuffer to_buffer(const std::vector<double>& x, int fs) {
  AudioBuffer b;
  b.sample_rate_hz = fs;
  b.samples.assign(x.begin(), x.end());
  return b;
}

}  // namespace detail::synth

/// Speech-like utterance framed by silence. Peak level 0.5.
inline AudioBuffer synth_speech(std::uint64_t seed, int fs = 16000, SpeechShape shape = {}) {
  using namespace detail::synth;
  Rng rng(seed);
  const auto lead = static_cast<std::size_t>(shape.lead_silence_s * fs);
  const auto tail = static_cast<std::size_t>(shape.tail_silence_s * fs);
  auto speech = speech_samples(rng, fs, shape.speech_s, shape.pauses);
  normalize_peak(speech, 0.5);
  std::vector<double> out(lead, 0.0);
  out.insert(out.end(), speech.begin(), speech.end());
  out.resize(out.size() + tail, 0.0);
  return to_buffer(out, fs);
}

/// Noise of the given family, RMS 0.1.
inline AudioBuffer synth_noise(NoiseKind kind, std::size_t length, std::uint64_t seed,
                               int fs = 16000) {
  using namespace detail::synth;
  Rng rng(seed);
  const double seconds = static_cast<double>(length) / fs;
  std::vector<double> x(length, 0.0);
  switch (kind) {
    case NoiseKind::White:
      for (double& v : x) v = rng.gaussian();
      break;
    case NoiseKind::Babble: {
      for (int talker = 0; talker < 6; ++talker) {
        Rng voice(rng.next());
        auto s = speech_samples(voice, fs, seconds + 0.5, false);
        normalize_rms(s, 1.0);
        const auto offset = static_cast<std::size_t>(voice.uniform(0.0, 0.5) * fs);
        for (std::size_t n = 0; n < length; ++n) x[n] += s[n + offset];
      }
      break;
    }
    case NoiseKind::Machinery: {
      const double hum = rng.uniform(48.0, 62.0);
      double low = 0.0;
      for (std::size_t n = 0; n < length; ++n) {
        const double t = static_cast<double>(n) / fs;
        double v = 0.0;
        for (int k = 1; k <= 8; ++k) v += std::sin(2.0 * std::numbers::pi * k * hum * t) / k;
        low = 0.95 * low + 0.05 * rng.gaussian();
        x[n] = 0.5 * v + 4.0 * low + 0.05 * rng.gaussian();
      }
      // Periodic impacts: decaying resonant bursts.
      const double period = rng.uniform(0.2, 0.35);
      const double ring = rng.uniform(1200.0, 2500.0);
      for (double start = rng.uniform(0.0, period); start < seconds; start += period) {
        const auto at = static_cast<std::size_t>(start * fs);
        const auto len = static_cast<std::size_t>(0.08 * fs);
        for (std::size_t n = 0; n < len && at + n < length; ++n) {
          const double t = static_cast<double>(n) / fs;
          x[at + n] += 2.0 * std::exp(-t / 0.02) *
                       (std::sin(2.0 * std::numbers::pi * ring * t) + 0.5 * rng.gaussian());
        }
      }
      break;
    }
    case NoiseKind::Traffic: {
      std::vector<double> bumps;
      const int vehicles = 2 + static_cast<int>(rng.uniform(0.0, 3.0));
      for (int v = 0; v < vehicles; ++v) bumps.push_back(rng.uniform(0.0, seconds));
      const double width = rng.uniform(0.8, 1.6);
      double brown = 0.0;
      double rumble = 0.0;
      for (std::size_t n = 0; n < length; ++n) {
        const double t = static_cast<double>(n) / fs;
        double level = 0.35;
        for (double c : bumps) level += std::exp(-0.5 * (t - c) * (t - c) / (width * width));
        brown = 0.985 * brown + 0.015 * rng.gaussian();
        rumble = 0.8 * rumble + 0.2 * rng.gaussian();
        x[n] = level * (6.0 * brown + 0.6 * rumble + 0.08 * rng.gaussian());
      }
      break;
    }
  }
  normalize_rms(x, 0.1);
  return to_buffer(x, fs);
}

struct CorpusItem {
  std::string id;
  AudioBuffer clean;
  std::vector<std::pair<NoiseKind, AudioBuffer>> noises;
};

inline std::string utterance_id(std::size_t index) {
  std::string digits = std::to_string(index + 1);
  return "utt" + std::string(digits.size() < 2 ? 2 - digits.size() : 0, '0') + digits;
}

/// `count` utterances, each paired with one noise clip per family.
inline std::vector<CorpusItem> generate_corpus(std::size_t count, std::uint64_t seed,
                                               int fs = 16000,
                                               std::span<const NoiseKind> kinds = kAllNoiseKinds) {
  std::vector<CorpusItem> items;
  items.reserve(count);
  for (std::size_t u = 0; u < count; ++u) {
    CorpusItem item;
    item.id = utterance_id(u);
    item.clean = synth_speech(mix_seed(seed, u + 1), fs);
    for (NoiseKind kind : kinds) {
      item.noises.emplace_back(
          kind, synth_noise(kind, item.clean.size(),
                            mix_seed(seed, u + 1, static_cast<std::uint64_t>(kind) + 1), fs));
    }
    items.push_back(std::move(item));
  }
  return items;
}

/// Writes clean/noise WAVs plus one tab-separated manifest per noise family
/// (`<family>.tsv`: utterance_id, clean_path, noise_path; paths relative to
/// the manifest). Returns the manifest paths.
inline std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir,
                                                       std::size_t count, std::uint64_t seed,
                                                       int fs = 16000) {
  namespace fs_ = std::filesystem;
  std::error_code ec;
  fs_::create_directories(dir, ec);
  if (ec) detail::fail(Errc::IoFailure, "cannot create " + dir.string());
  const auto items = generate_corpus(count, seed, fs);
  std::vector<fs_::path> manifests;
  std::vector<std::string> lines(kAllNoiseKinds.size());
  for (const auto& item : items) {
    const std::string clean_name = item.id + "_clean.wav";
    write_wav(dir / clean_name, item.clean, SampleFormat::Float32);
    for (std::size_t i = 0; i < item.noises.size(); ++i) {
      const auto& [kind, noise] = item.noises[i];
      const std::string noise_name = item.id + "_" + std::string(to_string(kind)) + ".wav";
      write_wav(dir / noise_name, noise, SampleFormat::Float32);
      lines[i] += item.id + "\t" + clean_name + "\t" + noise_name + "\n";
    }
  }
  for (std::size_t i = 0; i < kAllNoiseKinds.size(); ++i) {
    const auto path = dir / (std::string(to_string(kAllNoiseKinds[i])) + ".tsv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) detail::fail(Errc::IoFailure, "cannot write " + path.string());
    out << lines[i];
    manifests.push_back(path);
  }
  return manifests;
}

}  // namespace sgjmap
