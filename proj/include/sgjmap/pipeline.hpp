#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "sgjmap/audio_io.hpp"
#include "sgjmap/error.hpp"
#include "sgjmap/gain.hpp"
#include "sgjmap/noise_vad.hpp"
#include "sgjmap/stft.hpp"

namespace sgjmap {

struct PipelineConfig {
  int sample_rate_hz = 16000;
  StftConfig stft;
  GainRule rule = GainRule::Proposed;
  GainParams params;
  double init_noise_seconds = 2.0;
  VadConfig vad;
  double alpha_dd = 0.98;
  double noise_smoothing = kDefaultNoiseSmoothing;

  static PipelineConfig for_rate(int sample_rate_hz, double frame_ms = 20.0) {
    PipelineConfig c;
    c.sample_rate_hz = sample_rate_hz;
    c.stft = StftConfig::for_rate(sample_rate_hz, frame_ms);
    return c;
  }

  /// Frames spent estimating the noise before suppression engages.
  std::size_t init_frames() const {
    const double hop_seconds = static_cast<double>(stft.hop) / sample_rate_hz;
    return static_cast<std::size_t>(std::ceil(init_noise_seconds / hop_seconds - 1e-9));
  }

  void validate() const {
    if (sample_rate_hz <= 0) detail::fail(Errc::InvalidConfig, "sample rate must be positive");
    if (!(init_noise_seconds > 0.0)) {
      detail::fail(Errc::InvalidConfig, "init_noise_seconds must be positive");
    }
    if (!(alpha_dd >= 0.0 && alpha_dd < 1.0) ||
        !(noise_smoothing >= 0.0 && noise_smoothing < 1.0)) {
      detail::fail(Errc::InvalidConfig, "smoothing constants must lie in [0, 1)");
    }
    if (vad.hangover_frames < 0) detail::fail(Errc::InvalidConfig, "negative hangover");
    stft.validate();
  }
};

/// Streaming enhancer. Input is consumed in arbitrary chunk sizes; output
/// is released a hop at a time and trails the input by latency() samples.
/// Concatenated output after flush() is sample-aligned with the input.
///
/// process_chunk/flush/reset must be called from one thread at a time;
/// set_params/set_rule may be called concurrently and take effect at the
/// next frame boundary.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config)
      : config_((config.validate(), std::move(config))),
        stft_(config_.stft),
        norm_(config_.stft.overlap_sum()),
        tuning_(std::make_unique<TuningSlot>()) {
    tuning_->rule = config_.rule;
    tuning_->params = config_.params;
    reset_stream();
  }

  const PipelineConfig& config() const noexcept { return config_; }
  std::size_t latency() const noexcept { return config_.stft.frame_len - config_.stft.hop; }
  std::size_t frames_processed() const noexcept { return frames_processed_; }
  const NoiseEstimate& noise() const noexcept { return noise_; }
  const VadState& vad_state() const noexcept { return vad_; }
  const SnrState& snr_state() const noexcept { return snr_; }
  bool suppressing() const noexcept { return noise_.initialized; }

  void set_params(const GainParams& params) {
    std::lock_guard lock(tuning_->mutex);
    tuning_->params = params;
  }

  void set_rule(GainRule rule) {
    std::lock_guard lock(tuning_->mutex);
    tuning_->rule = rule;
  }

  GainParams params() const {
    std::lock_guard lock(tuning_->mutex);
    return tuning_->params;
  }

  GainRule rule() const {
    std::lock_guard lock(tuning_->mutex);
    return tuning_->rule;
  }

  /// Clears audio buffers and all adaptive state; the next samples start a
  /// new noise-initialization window. Tuning is kept.
  void reset() { reset_stream(); }

  std::vector<float> process_chunk(std::span<const float> samples) {
    for (float s : samples) {
      if (!std::isfinite(s)) detail::fail(Errc::NonFiniteInput, "non-finite input sample");
    }
    std::vector<float> out;
    out.reserve(samples.size() + config_.stft.hop);
    total_in_ += samples.size();
    pending_.insert(pending_.end(), samples.begin(), samples.end());
    drain(out);
    return out;
  }

  /// Pads the stream with zeros so every input sample is released, returns
  /// the remaining output, and resets the pipeline.
  std::vector<float> flush() {
    const std::size_t hop = config_.stft.hop;
    const std::size_t padded = latency() + total_in_;
    const std::size_t frames_needed = (padded + hop - 1) / hop;
    const std::size_t padded_needed = frames_needed == 0
                                          ? 0
                                          : (frames_needed - 1) * hop + config_.stft.frame_len;
    std::vector<float> out;
    if (padded_needed > padded) {
      pending_.insert(pending_.end(), padded_needed - padded, 0.0);
    }
    const std::size_t released = total_out_;
    drain(out);
    out.resize(std::min(out.size(), total_in_ - std::min(total_in_, released)));
    reset_stream();
    return out;
  }

 private:
  struct TuningSlot {
    mutable std::mutex mutex;
    GainRule rule = GainRule::Proposed;
    GainParams params;
  };

  struct Tuning {
    GainRule rule;
    GainParams params;
  };

  Tuning snapshot() const {
    std::lock_guard lock(tuning_->mutex);
    return {tuning_->rule, tuning_->params};
  }

  void reset_stream() {
    const std::size_t frame_len = config_.stft.frame_len;
    pending_.assign(latency(), 0.0);  // primes the first frames
    accum_.assign(frame_len, 0.0);
    block_.assign(frame_len, 0.0);
    skip_ = latency();
    total_in_ = 0;
    total_out_ = 0;
    frames_processed_ = 0;
    initializer_ = NoiseInitializer();
    noise_ = NoiseEstimate{};
    vad_ = VadState{};
    snr_ = SnrState{};
    snr_.alpha_dd = config_.alpha_dd;
  }

  void drain(std::vector<float>& out) {
    const std::size_t frame_len = config_.stft.frame_len;
    const std::size_t hop = config_.stft.hop;
    std::size_t offset = 0;
    while (pending_.size() - offset >= frame_len) {
      process_frame(std::span<const double>(pending_.data() + offset, frame_len));
      for (std::size_t n = 0; n < hop; ++n) {
        if (skip_ > 0) {
          --skip_;
          continue;
        }
        out.push_back(static_cast<float>(accum_[n] / norm_[n]));
        ++total_out_;
      }
      std::copy(accum_.begin() + static_cast<std::ptrdiff_t>(hop), accum_.end(), accum_.begin());
      std::fill(accum_.end() - static_cast<std::ptrdiff_t>(hop), accum_.end(), 0.0);
      offset += hop;
    }
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(offset));
  }

  void process_frame(std::span<const double> samples) {
    const Tuning tuning = snapshot();
    SpectralFrame frame = stft_.analyze_frame(samples, frames_processed_);

    if (!noise_.initialized) {
      initializer_.add(frame);
      if (initializer_.count() >= config_.init_frames()) noise_ = initializer_.finish();
    } else {
      const auto gamma = posterior_snr(frame, noise_);
      auto xi = decision_directed_xi(snr_, noise_, gamma);
      const double stat = vad_statistic(frame, noise_, xi);
      vad_ = vad_decide(stat, vad_, config_.vad);
      noise_ = update_noise(std::move(noise_), frame, vad_.decision, config_.noise_smoothing);

      const GainParams& p = tuning.params;
      GainVector gain;
      switch (tuning.rule) {
        case GainRule::Proposed: gain = proposed_gain(xi, gamma, p); break;
        case GainRule::Sgjmap:
          gain = sgjmap_gain(xi, gamma, p.mu(), p.nu(), p.gain_floor(), p.gain_cap());
          break;
        case GainRule::Jmap: gain = jmap_gain(xi, gamma, p.gain_floor(), p.gain_cap()); break;
        case GainRule::Bypass: gain.g.assign(frame.size(), 1.0); break;
      }

      snr_.prev_amp.resize(frame.size());
      for (std::size_t k = 0; k < frame.size(); ++k) {
        snr_.prev_amp[k] = gain.g[k] * frame.magnitude(k);
      }
      snr_.xi = std::move(xi);
      snr_.gamma = gamma;
      frame = apply_gain(frame, gain);
    }

    stft_.synthesize_frame(frame, block_);
    for (std::size_t n = 0; n < block_.size(); ++n) accum_[n] += block_[n];
    ++frames_processed_;
  }

  PipelineConfig config_;
  Stft stft_;
  std::vector<double> norm_;  // window overlap sum per hop phase
  std::unique_ptr<TuningSlot> tuning_;

  std::vector<double> pending_;
  std::vector<double> accum_;
  std::vector<double> block_;
  std::size_t skip_ = 0;
  std::size_t total_in_ = 0;
  std::size_t total_out_ = 0;
  std::size_t frames_processed_ = 0;

  NoiseInitializer initializer_;
  NoiseEstimate noise_;
  VadState vad_;
  SnrState snr_;
};

/// Runs a whole buffer through a fresh pipeline; the result has the same
/// length as the input and is sample-aligned with it.
inline AudioBuffer enhance(const AudioBuffer& input, const PipelineConfig& config) {
  if (input.sample_rate_hz != config.sample_rate_hz) {
    detail::fail(Errc::RateMismatch, "input rate " + std::to_string(input.sample_rate_hz) +
                                         " != pipeline rate " +
                                         std::to_string(config.sample_rate_hz));
  }
  Pipeline pipeline(config);
  AudioBuffer out;
  out.sample_rate_hz = input.sample_rate_hz;
  out.samples = pipeline.process_chunk(input.samples);
  const auto tail = pipeline.flush();
  out.samples.insert(out.samples.end(), tail.begin(), tail.end());
  return out;
}

struct SampleSpan {
  std::size_t start = 0;
  std::size_t count = 0;
};

/// Converts a [start, start + duration) window in seconds to samples.
/// A missing or non-positive duration extends to the end of the buffer.
inline SampleSpan span_from_seconds(const AudioBuffer& source, double start_seconds,
                                    double duration_seconds) {
  const double fs = source.sample_rate_hz;
  if (!std::isfinite(start_seconds) || start_seconds < 0.0) {
    detail::fail(Errc::InvalidArgument, "span start must be >= 0");
  }
  const auto start = static_cast<std::size_t>(std::llround(start_seconds * fs));
  if (start >= source.size()) detail::fail(Errc::InvalidArgument, "span starts past the end");
  std::size_t count = source.size() - start;
  if (duration_seconds > 0.0) {
    if (!std::isfinite(duration_seconds)) {
      detail::fail(Errc::InvalidArgument, "span duration must be finite");
    }
    const auto want = static_cast<std::size_t>(std::llround(duration_seconds * fs));
    if (want == 0 || want > count) detail::fail(Errc::InvalidArgument, "span exceeds source");
    count = want;
  }
  return {start, count};
}

/// Enhances `span` of `source`. Up to `preroll_seconds` of audio preceding
/// the span is run through the pipeline first (for noise initialization)
/// and trimmed from the result.
inline AudioBuffer enhance_span(const AudioBuffer& source, SampleSpan span,
                                const PipelineConfig& config, double preroll_seconds = 2.0) {
  if (span.count == 0 || span.start + span.count > source.size()) {
    detail::fail(Errc::InvalidArgument, "span outside source");
  }
  const auto preroll = std::min<std::size_t>(
      span.start,
      static_cast<std::size_t>(std::llround(preroll_seconds * source.sample_rate_hz)));
  AudioBuffer segment;
  segment.sample_rate_hz = source.sample_rate_hz;
  const auto first = source.samples.begin() + static_cast<std::ptrdiff_t>(span.start - preroll);
  segment.samples.assign(first, first + static_cast<std::ptrdiff_t>(preroll + span.count));
  AudioBuffer out = enhance(segment, config);
  out.samples.erase(out.samples.begin(),
                    out.samples.begin() + static_cast<std::ptrdiff_t>(preroll));
  return out;
}

}  // namespace sgjmap
