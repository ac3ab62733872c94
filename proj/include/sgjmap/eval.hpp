#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sgjmap/audio_io.hpp"
#include "sgjmap/error.hpp"
#include "sgjmap/gain.hpp"
#include "sgjmap/metrics.hpp"
#include "sgjmap/pipeline.hpp"

namespace sgjmap {

/// One utterance of a corpus. Audio is either given inline or loaded from
/// the paths when the row is evaluated.
struct Utterance {
  std::string id;
  std::string noise_type;
  std::filesystem::path clean_path;
  std::filesystem::path noise_path;
  std::optional<AudioBuffer> clean;
  std::optional<AudioBuffer> noise;
};

/// Reads a tab-separated manifest (utterance_id, clean_path, noise_path).
/// Relative paths resolve against the manifest's directory; blank lines and
/// lines starting with '#' are skipped.
inline std::vector<Utterance> read_manifest(const std::filesystem::path& path,
                                            const std::string& noise_type) {
  std::ifstream in(path);
  if (!in) detail::fail(Errc::IoFailure, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      detail::fail(Errc::InvalidArgument, path.string() + ":" + std::to_string(line_no) +
                                              ": expected 3 tab-separated fields");
    }
    Utterance u;
    u.id = fields[0];
    u.noise_type = noise_type;
    u.clean_path = base / fields[1];  // absolute paths replace base
    u.noise_path = base / fields[2];
    out.push_back(std::move(u));
  }
  return out;
}

struct EvalCondition {
  std::string noise_type;  // empty matches every utterance
  double snr_db = 0.0;
  GainRule rule = GainRule::Proposed;
  GainParams params;
};

struct EvalRow {
  std::string utterance_id;
  EvalCondition condition;
  double stoi_noisy = 0.0;
  double stoi_enhanced = 0.0;
  double segsnr_noisy_db = 0.0;
  double segsnr_enhanced_db = 0.0;
  double rtf = 0.0;
};

struct EvalOptions {
  double frame_ms = 20.0;
  int jobs = 1;
  std::optional<int> required_rate_hz;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<EvalRow> means;  // one per condition, utterance_id "mean"
  std::vector<std::string> failures;
};

/// Mixes, enhances, and scores one utterance under one condition.
inline EvalRow evaluate_utterance(const std::string& id, const AudioBuffer& clean,
                                  const AudioBuffer& noise, const EvalCondition& condition,
                                  const EvalOptions& options = {}) {
  if (options.required_rate_hz && clean.sample_rate_hz != *options.required_rate_hz) {
    detail::fail(Errc::RateMismatch, id + ": sample rate " + std::to_string(clean.sample_rate_hz));
  }
  const MixResult mix = mix_at_snr(clean, noise, condition.snr_db);

  PipelineConfig config = PipelineConfig::for_rate(clean.sample_rate_hz, options.frame_ms);
  config.rule = condition.rule;
  config.params = condition.params;
  const auto t0 = std::chrono::steady_clock::now();
  const AudioBuffer enhanced = enhance(mix.mixture, config);
  const auto t1 = std::chrono::steady_clock::now();

  EvalRow row;
  row.utterance_id = id;
  row.condition = condition;
  row.stoi_noisy = stoi(mix.clean, mix.mixture);
  row.stoi_enhanced = stoi(mix.clean, enhanced);
  row.segsnr_noisy_db = segmental_snr(mix.clean, mix.mixture);
  row.segsnr_enhanced_db = segmental_snr(mix.clean, enhanced);
  row.rtf = std::chrono::duration<double>(t1 - t0).count() / clean.duration_seconds();
  return row;
}

namespace detail {

inline std::vector<EvalRow> condition_means(const std::vector<EvalRow>& rows,
                                            const std::vector<EvalCondition>& conditions,
                                            const std::vector<std::size_t>& row_condition) {
  std::vector<EvalRow> means;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    EvalRow m;
    m.utterance_id = "mean";
    m.condition = conditions[c];
    std::size_t n = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (row_condition[r] != c) continue;
      m.stoi_noisy += rows[r].stoi_noisy;
      m.stoi_enhanced += rows[r].stoi_enhanced;
      m.segsnr_noisy_db += rows[r].segsnr_noisy_db;
      m.segsnr_enhanced_db += rows[r].segsnr_enhanced_db;
      m.rtf += rows[r].rtf;
      ++n;
    }
    if (n == 0) continue;
    const double k = static_cast<double>(n);
    m.stoi_noisy /= k;
    m.stoi_enhanced /= k;
    m.segsnr_noisy_db /= k;
    m.segsnr_enhanced_db /= k;
    m.rtf /= k;
    means.push_back(m);
  }
  return means;
}

}  // namespace detail

/// Evaluates every (utterance, condition) pair whose noise types match.
/// Per-row failures are recorded and the batch continues. Row order is
/// condition-major and independent of `options.jobs`.
inline EvalReport run_eval(const std::vector<Utterance>& corpus,
                           const std::vector<EvalCondition>& conditions,
                           const EvalOptions& options = {}) {
  struct Task {
    std::size_t utterance;
    std::size_t condition;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    for (std::size_t u = 0; u < corpus.size(); ++u) {
      if (conditions[c].noise_type.empty() || conditions[c].noise_type == corpus[u].noise_type) {
        tasks.push_back({u, c});
      }
    }
  }

  std::vector<std::optional<EvalRow>> results(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Utterance& u = corpus[tasks[i].utterance];
      const EvalCondition& cond = conditions[tasks[i].condition];
      try {
        const AudioBuffer clean = u.clean ? *u.clean : read_wav(u.clean_path);
        const AudioBuffer noise = u.noise ? *u.noise : read_wav(u.noise_path);
        results[i] = evaluate_utterance(u.id, clean, noise, cond, options);
      } catch (const std::exception& e) {
        errors[i] = u.id + " [" + cond.noise_type + " " + std::to_string(cond.snr_db) +
                    " dB]: " + e.what();
      }
    }
  };
  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  EvalReport report;
  std::vector<std::size_t> row_condition;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (results[i]) {
      report.rows.push_back(*results[i]);
      row_condition.push_back(tasks[i].condition);
    } else {
      report.failures.push_back(errors[i]);
    }
  }
  report.means = detail::condition_means(report.rows, conditions, row_condition);
  return report;
}

/// Runs the conditions once per tradeoff value; returns only the means,
/// beta-major.
inline EvalReport run_sweep(const std::vector<Utterance>& corpus,
                            const std::vector<EvalCondition>& conditions,
                            const std::vector<double>& betas, const EvalOptions& options = {}) {
  EvalReport sweep;
  for (double beta : betas) {
    std::vector<EvalCondition> at_beta = conditions;
    for (auto& c : at_beta) c.params = c.params.with_beta(beta);
    EvalReport r = run_eval(corpus, at_beta, options);
    sweep.means.insert(sweep.means.end(), r.means.begin(), r.means.end());
    sweep.failures.insert(sweep.failures.end(), r.failures.begin(), r.failures.end());
  }
  return sweep;
}

constexpr const char* kEvalCsvHeader =
    "utterance_id,noise_type,snr_db,rule,beta,mu,nu,stoi_noisy,stoi_enhanced,"
    "segsnr_noisy_db,segsnr_enhanced_db,rtf";

/// One CSV line (no newline). The rtf column is left empty unless
/// `with_timing`, so reports are reproducible byte for byte.
inline std::string to_csv_line(const EvalRow& r, bool with_timing) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%g,%s,%g,%g,%g,%.6f,%.6f,%.4f,%.4f,",
                r.utterance_id.c_str(), r.condition.noise_type.c_str(), r.condition.snr_db,
                std::string(to_string(r.condition.rule)).c_str(), r.condition.params.beta(),
                r.condition.params.mu(), r.condition.params.nu(), r.stoi_noisy, r.stoi_enhanced,
                r.segsnr_noisy_db, r.segsnr_enhanced_db);
  std::string line(buf);
  if (with_timing) {
    std::snprintf(buf, sizeof buf, "%.5f", r.rtf);
    line += buf;
  }
  return line;
}

inline void write_csv(std::ostream& out, const std::vector<EvalRow>& rows, bool with_timing) {
  out << kEvalCsvHeader << '\n';
  for (const auto& r : rows) out << to_csv_line(r, with_timing) << '\n';
}

}  // namespace sgjmap
