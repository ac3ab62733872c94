#include <gtest/gtest.h>

#include <functional>
#include <thread>

#include "sgjmap/corpus.hpp"
#include "sgjmap/metrics.hpp"
#include "sgjmap/pipeline.hpp"
#include "test_util.hpp"

using namespace sgjmap;

namespace {

// Whole-signal reference: frame the zero-primed, zero-padded input, walk
// the same per-frame state sequence, overlap-add, and cut the aligned span.
std::vector<double> offline_reference(const std::vector<float>& x, const PipelineConfig& cfg,
                                      const std::function<GainParams(std::size_t)>& params_at) {
  const std::size_t L = cfg.stft.frame_len - cfg.stft.hop;
  std::vector<double> padded(L, 0.0);
  padded.insert(padded.end(), x.begin(), x.end());
  padded.resize(padded.size() + cfg.stft.frame_len, 0.0);
  auto frames = analyze(padded, cfg.stft);

  const std::size_t init = cfg.init_frames();
  NoiseEstimate noise;
  VadState vad;
  SnrState snr;
  snr.alpha_dd = cfg.alpha_dd;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (f < init) continue;
    if (f == init) noise = init_noise(std::span(frames).first(init));
    auto& frame = frames[f];
    const auto gamma = posterior_snr(frame, noise);
    const auto xi = decision_directed_xi(snr, noise, gamma);
    vad = vad_decide(vad_statistic(frame, noise, xi), vad, cfg.vad);
    noise = update_noise(noise, frame, vad.decision, cfg.noise_smoothing);
    const GainParams p = params_at(f);
    GainVector g;
    switch (cfg.rule) {
      case GainRule::Proposed: g = proposed_gain(xi, gamma, p); break;
      case GainRule::Sgjmap: g = sgjmap_gain(xi, gamma, p.mu(), p.nu()); break;
      case GainRule::Jmap: g = jmap_gain(xi, gamma); break;
      case GainRule::Bypass: g.g.assign(frame.size(), 1.0); break;
    }
    snr.prev_amp.resize(frame.size());
    for (std::size_t k = 0; k < frame.size(); ++k) snr.prev_amp[k] = g[k] * frame.magnitude(k);
    frame = apply_gain(frame, g);
  }
  const auto y = synthesize(frames, cfg.stft);
  return {y.begin() + static_cast<std::ptrdiff_t>(L),
          y.begin() + static_cast<std::ptrdiff_t>(L + x.size())};
}

std::vector<float> noisy_speech(std::uint64_t seed, double noise_gain = 1.0) {
  const auto clean = synth_speech(seed);
  const auto noise = synth_noise(NoiseKind::White, clean.size(), seed + 1);
  return mix_at_snr(clean, noise, 20.0 * std::log10(1.0 / noise_gain)).mixture.samples;
}

std::vector<float> run_chunks(Pipeline& p, const std::vector<float>& x,
                              const std::vector<std::size_t>& sizes) {
  std::vector<float> out;
  std::size_t at = 0;
  for (std::size_t n : sizes) {
    const auto y = p.process_chunk(std::span<const float>(x).subspan(at, n));
    out.insert(out.end(), y.begin(), y.end());
    at += n;
  }
  const auto tail = p.flush();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

std::vector<std::size_t> random_partition(testutil::Gen& gen, std::size_t total) {
  std::vector<std::size_t> sizes;
  while (total > 0) {
    const std::size_t n = std::min(total, gen.index(0, 2000));
    sizes.push_back(n);
    total -= n;
  }
  return sizes;
}

}  // namespace

TEST(Pipeline, LatencyIsFrameMinusHop) {
  for (auto [fs, ms] : {std::pair{16000, 20.0}, {48000, 256.0 / 48.0}, {8000, 32.0}}) {
    const auto cfg = PipelineConfig::for_rate(fs, ms);
    EXPECT_EQ(Pipeline(cfg).latency(), cfg.stft.frame_len - cfg.stft.hop);
  }
}

TEST(Pipeline, InitFrames) {
  EXPECT_EQ(PipelineConfig{}.init_frames(), 200u);
  auto c = PipelineConfig::for_rate(48000, 256.0 / 48.0);
  EXPECT_EQ(c.init_frames(), 750u);
  c.init_noise_seconds = 0.0;
  EXPECT_THROW(Pipeline{c}, Error);
}

TEST(Pipeline, BypassDelaysByLatency) {
  testutil::Gen gen(1);
  const auto x = gen.noise(16000 * 3 + 77);
  auto cfg = PipelineConfig{};
  cfg.rule = GainRule::Bypass;
  Pipeline p(cfg);
  const auto streamed = p.process_chunk(x);
  ASSERT_EQ(streamed.size(), (x.size() / 160) * 160 - p.latency());
  for (std::size_t i = 0; i < streamed.size(); ++i) ASSERT_NEAR(streamed[i], x[i], 1e-6);
  const auto tail = p.flush();
  ASSERT_EQ(streamed.size() + tail.size(), x.size());
  for (std::size_t i = 0; i < tail.size(); ++i) {
    ASSERT_NEAR(tail[i], x[streamed.size() + i], 1e-6);
  }
}

TEST(Pipeline, InitializationWindowPassesThrough) {
  testutil::Gen gen(2);
  const auto x = gen.noise(16000 * 3);
  Pipeline p{PipelineConfig{}};
  const auto y = p.process_chunk(x);
  // Frames before init_frames() are synthesized with gain 1; their output
  // region ends one frame overlap before the first suppressed frame.
  const std::size_t clean_region = 200 * 160 - p.latency();
  for (std::size_t i = 0; i < clean_region; ++i) ASSERT_NEAR(y[i], x[i], 1e-6);
  EXPECT_TRUE(p.suppressing());
}

TEST(Pipeline, SilenceStaysSilent) {
  const std::vector<float> zeros(16000 * 3, 0.0f);
  Pipeline p{PipelineConfig{}};
  const auto y = run_chunks(p, zeros, {zeros.size()});
  ASSERT_EQ(y.size(), zeros.size());
  EXPECT_LE(testutil::rms(y), testutil::rms(zeros));
  for (float v : y) EXPECT_EQ(v, 0.0f);
}

TEST(Pipeline, MatchesOfflineReference) {
  const auto x = noisy_speech(5);
  for (GainRule rule : {GainRule::Proposed, GainRule::Sgjmap, GainRule::Jmap}) {
    PipelineConfig cfg;
    cfg.rule = rule;
    Pipeline p(cfg);
    const auto y = run_chunks(p, x, {x.size()});
    const auto ref = offline_reference(x, cfg, [](std::size_t) { return GainParams{}; });
    ASSERT_EQ(y.size(), ref.size());
    double err = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - ref[i]));
    EXPECT_LT(err, 1e-6) << to_string(rule);
  }
}

TEST(Pipeline, EnhanceIsSampleAligned) {
  const auto x = noisy_speech(6);
  const AudioBuffer in{x, 16000};
  const auto out = enhance(in, PipelineConfig{});
  EXPECT_EQ(out.size(), in.size());
  EXPECT_EQ(out.sample_rate_hz, 16000);
  AudioBuffer other{x, 8000};
  try {
    enhance(other, PipelineConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RateMismatch);
  }
}

TEST(PipelineProperty, ChunkPartitionInvariance) {
  const auto x = noisy_speech(7);
  Pipeline whole{PipelineConfig{}};
  const auto reference = run_chunks(whole, x, {x.size()});
  testutil::Gen gen(55);
  for (int trial = 0; trial < 8; ++trial) {
    Pipeline p{PipelineConfig{}};
    ASSERT_EQ(run_chunks(p, x, random_partition(gen, x.size())), reference) << trial;
  }
}

TEST(Pipeline, SetParamsTakesEffectAtFrameBoundary) {
  const auto x = noisy_speech(8);
  const std::size_t switch_frame = 300;
  // With L zeros primed, frame f completes once L + input >= f*hop + frame_len,
  // i.e. after (f + 1) * hop input samples.
  const std::size_t boundary = switch_frame * 160;
  Pipeline p{PipelineConfig{}};
  std::vector<float> y = p.process_chunk(std::span<const float>(x).first(boundary));
  EXPECT_EQ(p.frames_processed(), switch_frame);
  p.set_params(GainParams(5.0, 1.74, 0.126));
  EXPECT_EQ(p.params().beta(), 5.0);
  const auto rest = run_chunks(p, std::vector<float>(x.begin() + boundary, x.end()),
                               {x.size() - boundary});
  y.insert(y.end(), rest.begin(), rest.end());

  const auto ref = offline_reference(x, PipelineConfig{}, [&](std::size_t f) {
    return f < switch_frame ? GainParams{} : GainParams(5.0, 1.74, 0.126);
  });
  ASSERT_EQ(y.size(), ref.size());
  double err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - ref[i]));
  EXPECT_LT(err, 1e-6);
}

TEST(Pipeline, SetParamsClampsAndIsIdempotent) {
  Pipeline p{PipelineConfig{}};
  p.set_params(GainParams(0.01, 1.74, 0.126));
  EXPECT_EQ(p.params().beta(), 0.1);

  const auto x = noisy_speech(9);
  Pipeline a{PipelineConfig{}}, b{PipelineConfig{}};
  const auto ya = run_chunks(a, x, {x.size()});
  auto yb = b.process_chunk(std::span<const float>(x).first(40000));
  b.set_params(b.params());
  b.set_rule(b.rule());
  const auto rest = run_chunks(b, std::vector<float>(x.begin() + 40000, x.end()),
                               {x.size() - 40000});
  yb.insert(yb.end(), rest.begin(), rest.end());
  EXPECT_EQ(ya, yb);
}

TEST(Pipeline, ResetRestoresFreshState) {
  const auto x = noisy_speech(10);
  Pipeline fresh{PipelineConfig{}};
  const auto first = run_chunks(fresh, x, {x.size()});

  Pipeline p{PipelineConfig{}};
  p.process_chunk(std::span<const float>(x).first(12345));
  p.reset();
  p.reset();
  EXPECT_EQ(p.frames_processed(), 0u);
  EXPECT_FALSE(p.suppressing());
  EXPECT_EQ(run_chunks(p, x, {x.size()}), first);
  // flush() leaves the pipeline reset as well.
  EXPECT_EQ(run_chunks(p, x, {x.size()}), first);

  const std::vector<float> zeros(20000, 0.0f);
  Pipeline q{PipelineConfig{}}, r{PipelineConfig{}};
  q.process_chunk(x);
  q.reset();
  EXPECT_EQ(run_chunks(q, zeros, {zeros.size()}), run_chunks(r, zeros, {zeros.size()}));
}

TEST(Pipeline, TuningKeptAcrossReset) {
  Pipeline p{PipelineConfig{}};
  p.set_params(GainParams(3.0, 2.0, 0.5));
  p.set_rule(GainRule::Jmap);
  p.reset();
  EXPECT_EQ(p.params(), GainParams(3.0, 2.0, 0.5));
  EXPECT_EQ(p.rule(), GainRule::Jmap);
}

TEST(Pipeline, RejectsNonFiniteInput) {
  Pipeline p{PipelineConfig{}};
  const std::vector<float> bad{0.0f, std::numeric_limits<float>::infinity()};
  try {
    p.process_chunk(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteInput);
  }
}

TEST(Pipeline, ShortInputsFlushToInputLength) {
  for (std::size_t n : {0u, 1u, 159u, 160u, 161u, 320u, 1000u}) {
    testutil::Gen gen(n);
    const auto x = gen.noise(n);
    auto cfg = PipelineConfig{};
    cfg.rule = GainRule::Bypass;
    Pipeline p(cfg);
    const auto y = run_chunks(p, x, {n});
    ASSERT_EQ(y.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], x[i], 1e-6);
  }
}

TEST(Pipeline, ConcurrentParameterUpdatesAreSafe) {
  const auto x = noisy_speech(12);
  Pipeline p{PipelineConfig{}};
  std::atomic<bool> done{false};
  std::jthread tuner([&] {
    testutil::Gen gen(3);
    while (!done) p.set_params(GainParams(gen.uniform(0.1, 5.0), 1.74, 0.126));
  });
  const auto y = run_chunks(p, x, {x.size()});
  done = true;
  EXPECT_EQ(y.size(), x.size());
  for (float v : y) ASSERT_TRUE(std::isfinite(v));
}

TEST(EnhanceSpan, TrimsPrerollAndChecksRange) {
  const auto x = noisy_speech(13);
  const AudioBuffer src{x, 16000};
  const auto span = span_from_seconds(src, 2.5, 1.0);
  EXPECT_EQ(span.start, 40000u);
  EXPECT_EQ(span.count, 16000u);
  const auto out = enhance_span(src, span, PipelineConfig{});
  EXPECT_EQ(out.size(), 16000u);

  // Equivalent to enhancing [start - 2 s, end) and dropping the preroll.
  AudioBuffer seg{std::vector<float>(x.begin() + 8000, x.begin() + 56000), 16000};
  const auto whole = enhance(seg, PipelineConfig{});
  EXPECT_TRUE(std::equal(out.samples.begin(), out.samples.end(), whole.samples.begin() + 32000));

  EXPECT_EQ(span_from_seconds(src, 1.0, 0.0).count, src.size() - 16000);
  EXPECT_THROW(span_from_seconds(src, -1.0, 1.0), Error);
  EXPECT_THROW(span_from_seconds(src, 100.0, 1.0), Error);
  EXPECT_THROW(span_from_seconds(src, 4.0, 100.0), Error);
  EXPECT_THROW(enhance_span(src, SampleSpan{0, 0}, PipelineConfig{}), Error);
}
