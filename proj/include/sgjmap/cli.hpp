#pragma once

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgjmap/sgjmap.hpp"
#include "sgjmap/service.hpp"

namespace sgjmap::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInternal = 2 };

struct SharedFlags {
  std::string rule = "proposed";
  std::optional<double> beta;
  std::optional<double> mu;
  std::optional<double> nu;
  std::string preset;
  double frame_ms = 20.0;
  std::optional<int> fs_check;
  std::uint64_t seed = 42;
  int jobs = 1;
};

namespace detail {

inline void add_shared(CLI::App* app, SharedFlags& f) {
  app->add_option("--rule", f.rule, "Gain rule")
      ->check(CLI::IsMember({"proposed", "sgjmap", "jmap", "bypass"}));
  app->add_option("--beta", f.beta, "Tradeoff beta, 0.1-5 (default 1)");
  app->add_option("--mu", f.mu, "Prior shape mu, 0.5-3 (default 1.74)");
  app->add_option("--nu", f.nu, "Prior shape nu, 0.01-1 (default 0.126)");
  app->add_option("--preset", f.preset, "Noise preset for (mu, nu)")
      ->check(CLI::IsMember({"babble", "machinery", "traffic"}));
  app->add_option("--frame-ms", f.frame_ms, "Frame length in ms")->check(CLI::PositiveNumber);
  app->add_option("--fs-check", f.fs_check, "Reject inputs not at this sample rate (Hz)");
  app->add_option("--seed", f.seed, "Seed for the synthetic corpus");
  app->add_option("--jobs", f.jobs, "Parallel evaluation workers")->check(CLI::PositiveNumber);
}

inline void require_range(const char* name, const std::optional<double>& v, ParamRange r) {
  if (v && !(std::isfinite(*v) && r.contains(*v))) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "--%s %g is outside the valid range %g–%g", name, *v,
                  r.lo, r.hi);
    sgjmap::detail::fail(Errc::InvalidArgument, buf);
  }
}

/// Params from flags: defaults, then preset shape, then explicit values.
inline GainParams params_from(const SharedFlags& f) {
  require_range("beta", f.beta, kBetaRange);
  require_range("mu", f.mu, kMuRange);
  require_range("nu", f.nu, kNuRange);
  double mu = GainParams::kDefaultMu;
  double nu = GainParams::kDefaultNu;
  if (!f.preset.empty()) {
    const auto shape = shape_preset(*parse_preset(f.preset));
    mu = shape.mu;
    nu = shape.nu;
  }
  return GainParams(f.beta.value_or(GainParams::kDefaultBeta), f.mu.value_or(mu),
                    f.nu.value_or(nu));
}

inline void check_rate(const SharedFlags& f, const AudioBuffer& a, const std::string& what) {
  if (f.fs_check && a.sample_rate_hz != *f.fs_check) {
    sgjmap::detail::fail(Errc::RateMismatch, what + " is " + std::to_string(a.sample_rate_hz) +
                                                 " Hz, expected " + std::to_string(*f.fs_check));
  }
}

struct EvalFlags {
  std::vector<std::string> manifests;
  std::vector<double> snrs{-5.0, 0.0, 5.0};
  std::vector<double> betas{0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0};
  std::size_t count = 20;
  std::string out;
  bool timing = false;
};

inline void add_eval_flags(CLI::App* app, EvalFlags& e) {
  app->add_option("--manifest", e.manifests,
                  "Tab-separated manifest; the noise label is the file stem. Repeatable. "
                  "Without one, the synthetic corpus is generated from --seed.");
  app->add_option("--snr", e.snrs, "Input SNRs in dB")->delimiter(',');
  app->add_option("--count", e.count, "Synthetic corpus size")->check(CLI::PositiveNumber);
  app->add_option("--out", e.out, "CSV path (default stdout)");
  app->add_flag("--timing", e.timing, "Fill the rtf column (not reproducible)");
}

inline std::vector<Utterance> load_corpus(const EvalFlags& e, const SharedFlags& f) {
  std::vector<Utterance> corpus;
  if (e.manifests.empty()) {
    const int fs = f.fs_check.value_or(16000);
    for (auto& item : generate_corpus(e.count, f.seed, fs)) {
      for (auto& [kind, noise] : item.noises) {
        Utterance u;
        u.id = item.id;
        u.noise_type = std::string(to_string(kind));
        u.clean = item.clean;
        u.noise = std::move(noise);
        corpus.push_back(std::move(u));
      }
    }
    return corpus;
  }
  for (const auto& m : e.manifests) {
    const std::filesystem::path path(m);
    auto rows = read_manifest(path, path.stem().string());
    corpus.insert(corpus.end(), rows.begin(), rows.end());
  }
  return corpus;
}

/// One condition per (noise label, SNR), labels in first-seen order.
inline std::vector<EvalCondition> conditions_for(const std::vector<Utterance>& corpus,
                                                 const EvalFlags& e, const SharedFlags& f) {
  std::vector<std::string> labels;
  for (const auto& u : corpus) {
    if (std::find(labels.begin(), labels.end(), u.noise_type) == labels.end()) {
      labels.push_back(u.noise_type);
    }
  }
  const GainParams params = params_from(f);
  const GainRule rule = *parse_rule(f.rule);
  std::vector<EvalCondition> out;
  for (const auto& label : labels) {
    for (double snr : e.snrs) out.push_back({label, snr, rule, params});
  }
  return out;
}

inline void emit_csv(const EvalFlags& e, const std::vector<EvalRow>& rows, std::ostream& out) {
  if (e.out.empty()) {
    write_csv(out, rows, e.timing);
    return;
  }
  std::ofstream file(e.out, std::ios::binary | std::ios::trunc);
  if (!file) sgjmap::detail::fail(Errc::IoFailure, "cannot write " + e.out);
  write_csv(file, rows, e.timing);
}

inline int report_failures(const EvalReport& r, std::ostream& err) {
  for (const auto& f : r.failures) err << "failed: " << f << '\n';
  return r.failures.empty() ? kOk : kUsage;
}

}  // namespace detail

/// Runs one command line (args excludes the program name). Output goes to
/// `out`, diagnostics to `err`.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app("Single-microphone speech enhancement with a tunable tradeoff gain");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SharedFlags shared;

  auto* enhance = app.add_subcommand("enhance", "Enhance one WAV file");
  detail::add_shared(enhance, shared);
  std::string in_path, out_path, format = "float32";
  std::optional<double> start_s, dur_s;
  enhance->add_option("--in", in_path, "Input WAV")->required();
  enhance->add_option("--out", out_path, "Output WAV")->required();
  enhance->add_option("--format", format, "Output sample format")
      ->check(CLI::IsMember({"float32", "pcm16"}));
  enhance->add_option("--start", start_s, "Span start in seconds");
  enhance->add_option("--dur", dur_s, "Span duration in seconds");

  detail::EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Evaluate a corpus under each noise/SNR condition");
  detail::add_shared(eval, shared);
  detail::add_eval_flags(eval, eval_flags);

  auto* sweep = app.add_subcommand("sweep", "Condition means for each beta");
  detail::add_shared(sweep, shared);
  detail::add_eval_flags(sweep, eval_flags);
  sweep->add_option("--betas", eval_flags.betas, "Beta values")->delimiter(',');

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP tuning service");
  detail::add_shared(serve, shared);
  serve->add_option("--host", host, "Bind address (loopback by default)");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

  std::string corpus_dir;
  std::size_t corpus_count = 20;
  int corpus_fs = 16000;
  auto* corpus = app.add_subcommand("corpus", "Write the synthetic corpus and manifests");
  corpus->add_option("--out", corpus_dir, "Output directory")->required();
  corpus->add_option("--count", corpus_count, "Utterances")->check(CLI::PositiveNumber);
  corpus->add_option("--seed", shared.seed, "Seed");
  corpus->add_option("--fs", corpus_fs, "Sample rate")->check(CLI::PositiveNumber);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*enhance) {
      const GainParams params = detail::params_from(shared);
      const AudioBuffer input = read_wav(in_path);
      detail::check_rate(shared, input, in_path);
      PipelineConfig config = PipelineConfig::for_rate(input.sample_rate_hz, shared.frame_ms);
      config.rule = *parse_rule(shared.rule);
      config.params = params;
      const auto t0 = std::chrono::steady_clock::now();
      AudioBuffer output;
      if (start_s || dur_s) {
        const SampleSpan span =
            span_from_seconds(input, start_s.value_or(0.0), dur_s.value_or(0.0));
        output = enhance_span(input, span, config);
      } else {
        output = sgjmap::enhance(input, config);
      }
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_wav(out_path, output,
                format == "pcm16" ? SampleFormat::Pcm16 : SampleFormat::Float32);
      out << "rule=" << to_string(config.rule) << '\n'
          << "beta=" << params.beta() << '\n'
          << "mu=" << params.mu() << '\n'
          << "nu=" << params.nu() << '\n'
          << "samples=" << output.size() << '\n'
          << "sample_rate_hz=" << output.sample_rate_hz << '\n'
          << "latency_samples=" << config.stft.frame_len - config.stft.hop << '\n'
          << "rtf=" << seconds / std::max(input.duration_seconds(), 1e-9) << '\n';
      return kOk;
    }

    if (*eval || *sweep) {
      detail::params_from(shared);  // validate before any corpus work
      if (*sweep) {
        for (double b : eval_flags.betas) detail::require_range("beta", b, kBetaRange);
      }
      const auto utterances = detail::load_corpus(eval_flags, shared);
      const auto conditions = detail::conditions_for(utterances, eval_flags, shared);
      EvalOptions options;
      options.frame_ms = shared.frame_ms;
      options.jobs = shared.jobs;
      options.required_rate_hz = shared.fs_check;
      if (*eval) {
        const EvalReport report = run_eval(utterances, conditions, options);
        std::vector<EvalRow> rows = report.rows;
        rows.insert(rows.end(), report.means.begin(), report.means.end());
        detail::emit_csv(eval_flags, rows, out);
        return detail::report_failures(report, err);
      }
      const EvalReport report = run_sweep(utterances, conditions, eval_flags.betas, options);
      detail::emit_csv(eval_flags, report.means, out);
      return detail::report_failures(report, err);
    }

    if (*serve) {
      service::ServiceOptions options;
      options.frame_ms = shared.frame_ms;
      service::Server server(options);
      const int bound = server.bind(host, port);
      if (bound < 0) {
        err << "error: cannot bind " << host << ":" << port << '\n';
        return kUsage;
      }
      out << "listening=http://" << host << ":" << bound << std::endl;
      return server.listen() ? kOk : kInternal;
    }

    if (*corpus) {
      for (const auto& m : write_corpus(corpus_dir, corpus_count, shared.seed, corpus_fs)) {
        out << "manifest=" << m.string() << '\n';
      }
      return kOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace sgjmap::cli
