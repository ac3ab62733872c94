#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sgjmap/audio_io.hpp"
#include "sgjmap/error.hpp"
#include "sgjmap/gain.hpp"
#include "sgjmap/noise_vad.hpp"
#include "sgjmap/pipeline.hpp"
#include "sgjmap/stft.hpp"

namespace sgjmap::service {

using Clock = std::chrono::steady_clock;
using NowFn = std::function<Clock::time_point()>;

struct ServiceOptions {
  double frame_ms = 20.0;
  std::chrono::seconds idle_timeout{30 * 60};
  std::size_t max_payload_bytes = std::size_t{100} * 1024 * 1024;
  double preroll_seconds = 2.0;
  double speech_fraction_limit = 0.5;  // preroll frames above eta
};

struct PrerollReport {
  std::size_t frames = 0;
  std::size_t active = 0;
  bool warn = false;
};

/// Checks whether the noise-initialization audio looks speech-active.
/// The noise reference is the per-bin median power over those frames
/// divided by ln 2 (the median-to-mean ratio of an exponential variable),
/// so a minority of speech frames does not inflate it.
inline PrerollReport check_preroll(std::span<const float> preroll, const PipelineConfig& config,
                                   double limit = 0.5) {
  PrerollReport report;
  if (preroll.size() < config.stft.frame_len) return report;
  const auto frames = analyze(preroll, config.stft);
  const std::size_t bins = config.stft.bins();

  NoiseEstimate noise;
  noise.psd.resize(bins);
  noise.initialized = true;
  std::vector<double> column(frames.size());
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t f = 0; f < frames.size(); ++f) column[f] = frames[f].power(k);
    auto mid = column.begin() + static_cast<std::ptrdiff_t>(column.size() / 2);
    std::nth_element(column.begin(), mid, column.end());
    noise.psd[k] = std::max(*mid / std::numbers::ln2, noise.floor);
  }

  SnrState snr;
  snr.alpha_dd = config.alpha_dd;
  for (const auto& frame : frames) {
    const auto gamma = posterior_snr(frame, noise);
    auto xi = decision_directed_xi(snr, noise, gamma);
    if (vad_statistic(frame, noise, xi) > config.vad.threshold) ++report.active;
    const auto gain = proposed_gain(xi, gamma, config.params);
    snr.prev_amp.resize(bins);
    for (std::size_t k = 0; k < bins; ++k) snr.prev_amp[k] = gain.g[k] * frame.magnitude(k);
  }
  report.frames = frames.size();
  report.warn = static_cast<double>(report.active) > limit * static_cast<double>(report.frames);
  return report;
}

struct Session {
  std::string id;
  AudioBuffer source;
  Pipeline pipeline;  // holds the live tuning; renders use fresh clones
  Clock::time_point created;
  std::atomic<Clock::rep> last_used;  // ticks; read by expiry without the session lock
  std::mutex mutex;  // serializes requests within the session

  Session(std::string id_, AudioBuffer src, const PipelineConfig& config, Clock::time_point now)
      : id(std::move(id_)), source(std::move(src)), pipeline(config), created(now), last_used(now.time_since_epoch().count()) {}

  /// Config for a render: the session's config with its current tuning.
  PipelineConfig render_config() const {
    PipelineConfig c = pipeline.config();
    c.rule = pipeline.rule();
    c.params = pipeline.params();
    return c;
  }
};

/// Thread-safe session table with idle expiry.
class SessionStore {
 public:
  explicit SessionStore(std::chrono::seconds idle_timeout, NowFn now)
      : idle_timeout_(idle_timeout), now_(std::move(now)), rng_(std::random_device{}()) {}

  std::shared_ptr<Session> create(AudioBuffer source, const PipelineConfig& config) {
    std::lock_guard lock(mutex_);
    const auto now = now_();
    expire_locked(now);
    std::string id;
    do {
      id = fresh_id();
    } while (sessions_.contains(id));
    auto s = std::make_shared<Session>(id, std::move(source), config, now);
    sessions_.emplace(id, s);
    return s;
  }

  /// Returns the live session and marks it used, or nullptr.
  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto now = now_();
    expire_locked(now);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return nullptr;
    it->second->last_used = now.time_since_epoch().count();
    return it->second;
  }

  bool erase(const std::string& id) {
    std::lock_guard lock(mutex_);
    return sessions_.erase(id) > 0;
  }

  std::size_t size() {
    std::lock_guard lock(mutex_);
    expire_locked(now_());
    return sessions_.size();
  }

 private:
  void expire_locked(Clock::time_point now) {
    std::erase_if(sessions_, [&](const auto& entry) {
      const Clock::time_point used{Clock::duration{entry.second->last_used.load()}};
      return now - used >= idle_timeout_;
    });
  }

  std::string fresh_id() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id;
    for (int word = 0; word < 2; ++word) {
      std::uint64_t v = rng_();
      for (int i = 0; i < 16; ++i, v >>= 4) id.push_back(kHex[v & 0xf]);
    }
    return id;
  }

  std::chrono::seconds idle_timeout_;
  NowFn now_;
  std::mt19937_64 rng_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

namespace detail {

inline std::optional<double> parse_number(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

inline nlohmann::json params_json(GainRule rule, const GainParams& p) {
  return {{"beta", p.beta()}, {"mu", p.mu()}, {"nu", p.nu()}, {"rule", to_string(rule)}};
}

}  // namespace detail

/// HTTP front end over a SessionStore.
class Server {
 public:
  explicit Server(ServiceOptions options = {}, NowFn now = [] { return Clock::now(); })
      : options_(options), store_(options.idle_timeout, std::move(now)) {
    routes();
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds to host:port; port 0 picks a free port. Returns the bound port
  /// or -1.
  int bind(const std::string& host, int port) {
    if (port == 0) return http_.bind_to_any_port(host);
    return http_.bind_to_port(host, port) ? port : -1;
  }

  /// Serves until stop(); blocks.
  bool listen() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() const { http_.wait_until_ready(); }

  SessionStore& sessions() noexcept { return store_; }

 private:
  PipelineConfig config_for(int sample_rate_hz) const {
    return PipelineConfig::for_rate(sample_rate_hz, options_.frame_ms);
  }

  std::shared_ptr<Session> lookup(const httplib::Request& req, httplib::Response& res) {
    auto s = store_.find(req.path_params.at("id"));
    if (!s) detail::send_error(res, 404, "unknown session");
    return s;
  }

  /// Resolves the start/dur query into a span; sends 416 on failure.
  std::optional<SampleSpan> requested_span(const httplib::Request& req, httplib::Response& res,
                                           const AudioBuffer& source) {
    double start = 0.0;
    double dur = 0.0;
    for (auto [key, out] : {std::pair{"start", &start}, std::pair{"dur", &dur}}) {
      if (!req.has_param(key)) continue;
      const auto v = detail::parse_number(req.get_param_value(key));
      if (!v) {
        detail::send_error(res, 416, std::string("invalid ") + key);
        return std::nullopt;
      }
      *out = *v;
    }
    if (req.has_param("dur") && dur <= 0.0) {
      detail::send_error(res, 416, "dur must be positive");
      return std::nullopt;
    }
    try {
      return span_from_seconds(source, start, dur);
    } catch (const Error& e) {
      detail::send_error(res, 416, e.what());
      return std::nullopt;
    }
  }

  void routes() {
    http_.set_payload_max_length(options_.max_payload_bytes);
    http_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    http_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    http_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      detail::send_json(res, 200, {{"status", "ok"}});
    });

    http_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      AudioBuffer source;
      try {
        const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
        source = decode_wav(std::span<const std::uint8_t>(data, req.body.size()));
      } catch (const Error& e) {
        detail::send_error(res, 400, e.what());
        return;
      }
      const PipelineConfig config = config_for(source.sample_rate_hz);
      const auto preroll_len = std::min<std::size_t>(
          source.size(), config.init_frames() * config.stft.hop);
      const auto preroll = check_preroll(
          std::span<const float>(source.samples).first(preroll_len), config,
          options_.speech_fraction_limit);
      auto s = store_.create(std::move(source), config);
      std::lock_guard lock(s->mutex);
      nlohmann::json body{{"id", s->id},
                          {"sample_rate_hz", s->source.sample_rate_hz},
                          {"duration_seconds", s->source.duration_seconds()},
                          {"preroll_warning", preroll.warn}};
      if (preroll.warn) res.set_header("X-Preroll-Warning", warning_text(preroll));
      detail::send_json(res, 201, body);
    });

    http_.Put("/sessions/:id/params", [this](const httplib::Request& req,
                                             httplib::Response& res) {
      auto s = lookup(req, res);
      if (!s) return;
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        detail::send_error(res, 400, "body is not JSON");
        return;
      }
      if (!body.is_object()) {
        detail::send_error(res, 422, "expected a JSON object");
        return;
      }
      std::lock_guard lock(s->mutex);
      GainParams p = s->pipeline.params();
      GainRule rule = s->pipeline.rule();
      double beta = p.beta();
      double mu = p.mu();
      double nu = p.nu();
      if (body.contains("preset") && !body["preset"].is_null()) {
        const auto preset = body["preset"].is_string()
                                ? parse_preset(body["preset"].get<std::string>())
                                : std::nullopt;
        if (!preset) {
          detail::send_error(res, 422, "preset must be babble, machinery or traffic");
          return;
        }
        mu = shape_preset(*preset).mu;
        nu = shape_preset(*preset).nu;
      }
      for (auto [key, out] : {std::pair{"beta", &beta}, std::pair{"mu", &mu},
                              std::pair{"nu", &nu}}) {
        if (!body.contains(key)) continue;
        const auto& v = body[key];
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
          detail::send_error(res, 422, std::string(key) + " must be numeric");
          return;
        }
        *out = v.get<double>();
      }
      if (body.contains("rule")) {
        const auto parsed =
            body["rule"].is_string() ? parse_rule(body["rule"].get<std::string>()) : std::nullopt;
        if (!parsed) {
          detail::send_error(res, 422, "rule must be proposed, sgjmap, jmap or bypass");
          return;
        }
        rule = *parsed;
      }
      s->pipeline.set_params(GainParams(beta, mu, nu, p.gain_floor(), p.gain_cap()));
      s->pipeline.set_rule(rule);
      detail::send_json(res, 200, detail::params_json(s->pipeline.rule(), s->pipeline.params()));
    });

    http_.Get("/sessions/:id/params", [this](const httplib::Request& req,
                                             httplib::Response& res) {
      auto s = lookup(req, res);
      if (!s) return;
      std::lock_guard lock(s->mutex);
      detail::send_json(res, 200, detail::params_json(s->pipeline.rule(), s->pipeline.params()));
    });

    http_.Get("/sessions/:id/render", [this](const httplib::Request& req,
                                             httplib::Response& res) {
      auto s = lookup(req, res);
      if (!s) return;
      std::lock_guard lock(s->mutex);
      const auto span = requested_span(req, res, s->source);
      if (!span) return;
      const PipelineConfig config = s->render_config();
      const AudioBuffer out = enhance_span(s->source, *span, config, options_.preroll_seconds);
      const auto report = preroll_for(*s, *span, config);
      if (report.warn) res.set_header("X-Preroll-Warning", warning_text(report));
      const auto bytes = encode_wav(out, SampleFormat::Float32);
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
    });

    http_.Get("/sessions/:id/spectrogram", [this](const httplib::Request& req,
                                                  httplib::Response& res) {
      auto s = lookup(req, res);
      if (!s) return;
      std::lock_guard lock(s->mutex);
      const auto span = requested_span(req, res, s->source);
      if (!span) return;
      const std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "enhanced";
      if (kind != "noisy" && kind != "enhanced") {
        detail::send_error(res, 422, "kind must be noisy or enhanced");
        return;
      }
      const PipelineConfig config = s->render_config();
      std::vector<float> audio;
      if (kind == "noisy") {
        const auto first = s->source.samples.begin() + static_cast<std::ptrdiff_t>(span->start);
        audio.assign(first, first + static_cast<std::ptrdiff_t>(span->count));
      } else {
        audio = enhance_span(s->source, *span, config, options_.preroll_seconds).samples;
      }
      if (audio.size() < config.stft.frame_len) {
        detail::send_error(res, 416, "span shorter than one frame");
        return;
      }
      const auto frames = analyze(audio, config.stft);
      nlohmann::json db = nlohmann::json::array();
      for (const auto& f : frames) {
        std::vector<double> row(f.size());
        for (std::size_t k = 0; k < f.size(); ++k) {
          row[k] = 10.0 * std::log10(std::max(f.power(k), 1e-20));
        }
        db.push_back(std::move(row));
      }
      detail::send_json(res, 200,
                        {{"kind", kind},
                         {"frames", frames.size()},
                         {"bins", config.stft.bins()},
                         {"hop_seconds", static_cast<double>(config.stft.hop) /
                                             config.sample_rate_hz},
                         {"bin_hz", static_cast<double>(config.sample_rate_hz) /
                                        static_cast<double>(config.stft.fft_size)},
                         {"db", std::move(db)}});
    });

    http_.Delete("/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
      if (!store_.erase(req.path_params.at("id"))) {
        detail::send_error(res, 404, "unknown session");
        return;
      }
      res.status = 204;
    });

    http_.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                   std::exception_ptr ep) {
      std::string message = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        message = e.what();
      } catch (...) {
      }
      detail::send_error(res, 500, message);
    });
  }

  /// Preroll check over the audio a render uses for noise initialization.
  PrerollReport preroll_for(const Session& s, SampleSpan span, const PipelineConfig& config) const {
    const auto lead = std::min<std::size_t>(
        span.start,
        static_cast<std::size_t>(std::llround(options_.preroll_seconds * s.source.sample_rate_hz)));
    const std::size_t begin = span.start - lead;
    const std::size_t len = std::min<std::size_t>(
        s.source.size() - begin, config.init_frames() * config.stft.hop);
    return check_preroll(std::span<const float>(s.source.samples).subspan(begin, len), config,
                         options_.speech_fraction_limit);
  }

  static std::string warning_text(const PrerollReport& r) {
    return "noise-initialization audio looks speech-active (" + std::to_string(r.active) +
           " of " + std::to_string(r.frames) + " frames)";
  }

  ServiceOptions options_;
  SessionStore store_;
  httplib::Server http_;
};

}  // namespace sgjmap::service
