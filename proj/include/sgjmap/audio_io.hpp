#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sgjmap/error.hpp"

namespace sgjmap {

static_assert(std::endian::native == std::endian::little,
              "WAV codec assumes a little-endian host");

/// Mono audio at a fixed sample rate. Samples are nominally in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate_hz = 16000;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration_seconds() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

enum class SampleFormat { Pcm16, Float32 };

namespace detail {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline bool tag_is(std::span<const std::uint8_t> b, std::size_t at,
                   const char (&tag)[5]) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
  }
}

inline void put_tag(std::vector<std::uint8_t>& out, const char (&tag)[5]) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

/// Decodes an in-memory RIFF/WAVE image. Stereo is averaged to mono.
inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || !detail::tag_is(bytes, 0, "RIFF") ||
      !detail::tag_is(bytes, 8, "WAVE")) {
    detail::fail(Errc::MalformedWav, "missing RIFF/WAVE header");
  }

  bool have_fmt = false;
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (chunk_size > bytes.size() - body) {
      detail::fail(Errc::MalformedWav, "chunk extends past end of file");
    }
    if (detail::tag_is(bytes, pos, "fmt ")) {
      if (chunk_size < 16) detail::fail(Errc::MalformedWav, "short fmt chunk");
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format == detail::kFormatExtensible) {
        if (chunk_size < 40) {
          detail::fail(Errc::MalformedWav, "short extensible fmt chunk");
        }
        // First two bytes of the sub-format GUID hold the actual format tag.
        format = read_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (detail::tag_is(bytes, pos, "data")) {
      data = bytes.subspan(body, chunk_size);
      have_data = true;
      break;
    }
    pos = body + chunk_size + (chunk_size & 1U);
  }

  if (!have_fmt || !have_data) {
    detail::fail(Errc::MalformedWav, "missing fmt or data chunk");
  }
  if (format != detail::kFormatPcm && format != detail::kFormatFloat) {
    detail::fail(Errc::UnsupportedFormat,
                 "compression code " + std::to_string(format));
  }
  if (channels != 1 && channels != 2) {
    detail::fail(Errc::UnsupportedFormat,
                 std::to_string(channels) + " channels");
  }
  if ((format == detail::kFormatPcm && bits != 16) ||
      (format == detail::kFormatFloat && bits != 32)) {
    detail::fail(Errc::UnsupportedFormat,
                 std::to_string(bits) + "-bit samples");
  }
  if (rate == 0) detail::fail(Errc::MalformedWav, "zero sample rate");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data.size() / frame_bytes;
  if (frames == 0) detail::fail(Errc::EmptyAudio, "no samples");

  auto sample_at = [&](std::size_t index) -> float {
    const std::size_t at = index * bytes_per_sample;
    if (format == detail::kFormatPcm) {
      const auto raw = static_cast<std::int16_t>(read_u16(data, at));
      return static_cast<float>(raw) / 32768.0F;
    }
    const float value = std::bit_cast<float>(read_u32(data, at));
    if (!std::isfinite(value)) {
      detail::fail(Errc::MalformedWav, "non-finite float sample");
    }
    return value;
  };

  AudioBuffer out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    if (channels == 1) {
      out.samples[i] = sample_at(i);
    } else {
      out.samples[i] = 0.5F * (sample_at(2 * i) + sample_at(2 * i + 1));
    }
  }
  return out;
}

/// Encodes a mono buffer as a canonical 44-byte-header WAV image.
inline std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer,
                                            SampleFormat format) {
  if (buffer.empty()) detail::fail(Errc::InvalidArgument, "empty buffer");
  if (buffer.sample_rate_hz <= 0) {
    detail::fail(Errc::InvalidArgument, "non-positive sample rate");
  }
  const bool pcm = format == SampleFormat::Pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(buffer.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + data_bytes);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, pcm ? detail::kFormatPcm : detail::kFormatFloat);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate_hz));
  detail::put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate_hz) *
                           (bits / 8));
  detail::put_u16(out, bits / 8);
  detail::put_u16(out, bits);
  detail::put_tag(out, "data");
  detail::put_u32(out, data_bytes);

  for (float s : buffer.samples) {
    if (pcm) {
      const double clamped = std::clamp(static_cast<double>(s), -1.0, 1.0);
      const double scaled = std::round(clamped * 32768.0);
      const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      detail::put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(s));
    }
  }
  return out;
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail(Errc::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

inline void write_wav(const std::filesystem::path& path,
                      const AudioBuffer& buffer,
                      SampleFormat format = SampleFormat::Float32) {
  const auto bytes = encode_wav(buffer, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) detail::fail(Errc::IoFailure, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) detail::fail(Errc::IoFailure, "write failed for " + path.string());
}

/// Band-limited resampling with a Kaiser-windowed sinc kernel. The cutoff
/// sits at the lower of the two Nyquist frequencies and the kernel spans
/// 32 zero crossings on each side (at least 64 taps).
inline AudioBuffer resample(const AudioBuffer& buffer, int target_rate_hz) {
  if (target_rate_hz <= 0 || buffer.sample_rate_hz <= 0) {
    detail::fail(Errc::InvalidArgument, "sample rates must be positive");
  }
  if (target_rate_hz == buffer.sample_rate_hz) return buffer;

  constexpr double kZeroCrossings = 32.0;
  constexpr double kKaiserBeta = 8.0;

  const double src = buffer.sample_rate_hz;
  const double dst = target_rate_hz;
  // Cutoff as a fraction of the input rate (0.5 == input Nyquist).
  const double cutoff = 0.5 * std::min(1.0, dst / src);
  const double half_width = kZeroCrossings / (2.0 * cutoff);
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);

  auto kernel = [&](double d) {
    const double r = d / half_width;
    if (std::abs(r) >= 1.0) return 0.0;
    const double x = 2.0 * cutoff * d;
    const double sinc =
        x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double window =
        std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
    return 2.0 * cutoff * sinc * window;
  };

  const auto n_in = static_cast<std::ptrdiff_t>(buffer.size());
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(buffer.size()) * dst / src));

  // Output instant n sits at n*src/dst input samples. The fractional part
  // cycles through dst/gcd distinct values, so one kernel per phase suffices.
  const std::int64_t src_i = buffer.sample_rate_hz;
  const std::int64_t dst_i = target_rate_hz;
  const std::int64_t g = std::gcd(src_i, dst_i);
  const std::int64_t phases = dst_i / g;
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(half_width));
  const std::size_t taps = static_cast<std::size_t>(2 * reach + 1);

  std::vector<double> table(static_cast<std::size_t>(phases) * taps);
  for (std::int64_t p = 0; p < phases; ++p) {
    const double frac = static_cast<double>(p * g) / dst;
    for (std::ptrdiff_t o = -reach; o <= reach; ++o) {
      table[static_cast<std::size_t>(p) * taps + static_cast<std::size_t>(o + reach)] =
          kernel(frac - static_cast<double>(o));
    }
  }

  AudioBuffer out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::int64_t pos = static_cast<std::int64_t>(n) * src_i;
    const auto base = static_cast<std::ptrdiff_t>(pos / dst_i);
    const std::int64_t phase = (pos % dst_i) / g;
    const double* k = table.data() + static_cast<std::size_t>(phase) * taps;
    double acc = 0.0;
    for (std::ptrdiff_t o = -reach; o <= reach; ++o) {
      const std::ptrdiff_t j = base + o;
      if (j < 0 || j >= n_in) continue;
      acc += buffer.samples[static_cast<std::size_t>(j)] *
             k[static_cast<std::size_t>(o + reach)];
    }
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace sgjmap
