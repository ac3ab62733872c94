#include <gtest/gtest.h>

#include <complex>

#include "sgjmap/stft.hpp"
#include "test_util.hpp"

using namespace sgjmap;

namespace {

StftConfig rect(std::size_t n) { return StftConfig{n, n, n, WindowKind::Rectangular}; }

// A random configuration satisfying the geometry and COLA constraints.
StftConfig random_config(testutil::Gen& gen) {
  StftConfig c;
  if (gen.uniform(0.0, 1.0) < 0.75) {
    c.window = WindowKind::Hann;
    c.frame_len = 2 * gen.index(8, 600);
    c.hop = (c.frame_len % 4 == 0 && gen.uniform(0.0, 1.0) < 0.3) ? c.frame_len / 4
                                                                   : c.frame_len / 2;
  } else {
    c.window = WindowKind::Rectangular;
    c.frame_len = gen.index(16, 700);
    c.hop = c.frame_len;
  }
  c.fft_size = std::bit_ceil(c.frame_len) << gen.index(0, 1);
  return c;
}

double max_steady_error(std::span<const double> x, std::span<const double> y,
                        const StftConfig& c) {
  const std::size_t frames = (x.size() - c.frame_len) / c.hop + 1;
  const std::size_t end = (frames - 1) * c.hop + c.frame_len;
  double err = 0.0;
  for (std::size_t i = c.frame_len - c.hop; i < end - (c.frame_len - c.hop); ++i) {
    err = std::max(err, std::abs(x[i] - y[i]));
  }
  return err;
}

}  // namespace

TEST(StftConfig, DefaultsFollowFrameDuration) {
  const auto c = StftConfig::for_rate(16000);
  EXPECT_EQ(c.frame_len, 320u);
  EXPECT_EQ(c.hop, 160u);
  EXPECT_EQ(c.fft_size, 512u);
  EXPECT_EQ(c, StftConfig{});
  const auto c48 = StftConfig::for_rate(48000, 256.0 / 48.0);
  EXPECT_EQ(c48.frame_len, 256u);
  EXPECT_EQ(c48.fft_size, 256u);
}

TEST(StftConfig, RejectsInvalidGeometry) {
  EXPECT_THROW((StftConfig{320, 0, 512}.validate()), Error);
  EXPECT_THROW((StftConfig{320, 400, 512}.validate()), Error);
  EXPECT_THROW((StftConfig{320, 160, 256}.validate()), Error);
  EXPECT_THROW((StftConfig{320, 160, 500}.validate()), Error);
  EXPECT_THROW((StftConfig{320, 100, 512}.validate()), Error);  // not COLA
  EXPECT_NO_THROW((StftConfig{320, 80, 512}.validate()));
}

TEST(StftConfig, OverlapSumIsConstant) {
  for (const auto& c : {StftConfig{}, StftConfig{256, 128, 256}, StftConfig{480, 120, 512}}) {
    const auto s = c.overlap_sum();
    for (double v : s) EXPECT_NEAR(v, s.front(), 1e-10);
  }
}

TEST(Analyze, ConstantSignalIsDcOnly) {
  const std::vector<double> x(8, 1.0);
  const auto frames = analyze(x, rect(8));
  ASSERT_EQ(frames.size(), 1u);
  ASSERT_EQ(frames[0].size(), 5u);
  EXPECT_NEAR(frames[0].bins[0].real(), 8.0, 1e-12);
  EXPECT_EQ(frames[0].bins[0].imag(), 0.0);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_NEAR(std::abs(frames[0].bins[k]), 0.0, 1e-12);
}

TEST(Analyze, ImpulseIsFlat) {
  std::vector<double> x(16, 0.0);
  x[0] = 1.0;
  const auto frames = analyze(x, rect(16));
  for (const auto& b : frames[0].bins) EXPECT_NEAR(std::abs(b), 1.0, 1e-12);
}

TEST(Analyze, KiloHertzToneLandsInBin32) {
  const auto x = testutil::tone(1000.0, 0.02, 16000);
  const auto frame = analyze(x.samples, StftConfig{})[0];
  std::size_t best = 0;
  for (std::size_t k = 0; k < frame.size(); ++k) {
    if (frame.magnitude(k) > frame.magnitude(best)) best = k;
  }
  EXPECT_EQ(best, 32u);

  // Oracle: direct DFT of the windowed, zero-padded frame.
  const auto w = make_window(WindowKind::Hann, 320);
  for (std::size_t k : {0u, 5u, 31u, 32u, 33u, 200u, 256u}) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < 320; ++n) {
      acc += static_cast<double>(x.samples[n]) * w[n] *
             std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * n) / 512.0);
    }
    EXPECT_NEAR(std::abs(frame.bins[k] - acc), 0.0, 1e-9) << k;
  }
}

TEST(Analyze, FramingAndErrors) {
  std::vector<float> x(1000, 0.1f);
  const auto frames = analyze(x, StftConfig{});
  EXPECT_EQ(frames.size(), (1000u - 320u) / 160u + 1u);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(frames[i].index, i);
    EXPECT_EQ(frames[i].bins.front().imag(), 0.0);
    EXPECT_EQ(frames[i].bins.back().imag(), 0.0);
  }
  std::vector<float> short_x(319, 0.0f);
  try {
    analyze(short_x, StftConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientSamples);
  }
}

TEST(Synthesize, WhiteNoiseReconstructs) {
  testutil::Gen gen(11);
  const auto x = gen.noise_d(16000);
  const StftConfig c;
  const auto y = synthesize(analyze(x, c), c);
  EXPECT_LT(max_steady_error(x, y, c), 1e-6);
}

TEST(Synthesize, EmptyAndMismatched) {
  EXPECT_TRUE(synthesize({}, StftConfig{}).empty());
  SpectralFrame bad;
  bad.bins.resize(100);
  const std::vector<SpectralFrame> frames{bad};
  try {
    synthesize(frames, StftConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigMismatch);
  }
}

TEST(StftProperty, PerfectReconstructionRandomConfigs) {
  testutil::Gen gen(77);
  for (int trial = 0; trial < 40; ++trial) {
    const auto c = random_config(gen);
    const auto x = gen.noise_d(c.frame_len * gen.index(3, 12) + gen.index(0, c.hop));
    const auto y = synthesize(analyze(x, c), c);
    EXPECT_LT(max_steady_error(x, y, c), 1e-6)
        << c.frame_len << "/" << c.hop << "/" << c.fft_size;
  }
}

TEST(StftProperty, ParsevalPerFrame) {
  testutil::Gen gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_config(gen);
    const auto x = gen.noise_d(c.frame_len * 3);
    const auto w = make_window(c.window, c.frame_len);
    const auto frames = analyze(x, c);
    for (const auto& f : frames) {
      double time = 0.0;
      for (std::size_t n = 0; n < c.frame_len; ++n) {
        const double v = x[f.index * c.hop + n] * w[n];
        time += v * v;
      }
      double freq = f.power(0) + f.power(f.size() - 1);
      for (std::size_t k = 1; k + 1 < f.size(); ++k) freq += 2.0 * f.power(k);
      EXPECT_NEAR(freq / static_cast<double>(c.fft_size), time, 1e-9 * time);
    }
  }
}

TEST(StftProperty, Linearity) {
  testutil::Gen gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_config(gen);
    const auto x = gen.noise_d(c.frame_len * 2);
    const auto y = gen.noise_d(c.frame_len * 2, 3.0);
    std::vector<double> xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xy[i] = x[i] + y[i];
    const auto fx = analyze(x, c), fy = analyze(y, c), fxy = analyze(xy, c);
    for (std::size_t f = 0; f < fx.size(); ++f) {
      double scale = 0.0;
      for (const auto& b : fxy[f].bins) scale = std::max(scale, std::abs(b));
      for (std::size_t k = 0; k < fx[f].size(); ++k) {
        EXPECT_LE(std::abs(fxy[f].bins[k] - fx[f].bins[k] - fy[f].bins[k]), 1e-9 * scale);
      }
    }
  }
}

TEST(Stft, InstancesAreIndependentAcrossThreads) {
  testutil::Gen gen(9);
  const auto x = gen.noise_d(48000);
  const StftConfig c;
  const auto reference = analyze(x, c);
  std::vector<std::jthread> pool;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&] {
      const auto got = analyze(x, c);
      for (std::size_t f = 0; f < got.size(); ++f) {
        if (got[f].bins != reference[f].bins) ++mismatches;
      }
    });
  }
  pool.clear();
  EXPECT_EQ(mismatches.load(), 0);
}
