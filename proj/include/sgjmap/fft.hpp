#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <mutex>
#include <span>

#include "sgjmap/error.hpp"

namespace sgjmap {

namespace detail {
// FFTW's planner is not re-entrant; only execution is thread-safe.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Real-input FFT of a fixed size with per-instance buffers and plans.
/// Instances are independent; concurrent use of distinct instances is safe.
class RealFft {
 public:
  explicit RealFft(std::size_t size) : size_(size) {
    if (size < 2) detail::fail(Errc::InvalidConfig, "FFT size must be >= 2");
    time_ = fftw_alloc_real(size_);
    freq_ = fftw_alloc_complex(bins());
    std::lock_guard lock(detail::fftw_planner_mutex());
    const int n = static_cast<int>(size_);
    forward_ = fftw_plan_dft_r2c_1d(n, time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, freq_, time_, FFTW_ESTIMATE);
  }

  RealFft(const RealFft& other) : RealFft(other.size_) {}
  RealFft& operator=(const RealFft& other) {
    if (this != &other) {
      RealFft copy(other);
      swap(copy);
    }
    return *this;
  }
  RealFft(RealFft&& other) noexcept { swap(other); }
  RealFft& operator=(RealFft&& other) noexcept {
    swap(other);
    return *this;
  }

  ~RealFft() {
    if (time_ == nullptr) return;
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      fftw_destroy_plan(forward_);
      fftw_destroy_plan(inverse_);
    }
    fftw_free(time_);
    fftw_free(freq_);
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t bins() const noexcept { return size_ / 2 + 1; }

  /// Unnormalized forward transform; `in` may be shorter than size() and is
  /// zero-padded.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) {
    std::copy(in.begin(), in.end(), time_);
    std::fill(time_ + in.size(), time_ + size_, 0.0);
    fftw_execute(forward_);
    for (std::size_t k = 0; k < bins(); ++k) {
      out[k] = {freq_[k][0], freq_[k][1]};
    }
  }

  /// Inverse transform scaled by 1/size(), so inverse(forward(x)) == x.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) {
    for (std::size_t k = 0; k < bins(); ++k) {
      freq_[k][0] = in[k].real();
      freq_[k][1] = in[k].imag();
    }
    // c2r assumes a Hermitian spectrum; the DC and Nyquist bins must be real.
    freq_[0][1] = 0.0;
    freq_[bins() - 1][1] = 0.0;
    fftw_execute(inverse_);
    const double scale = 1.0 / static_cast<double>(size_);
    const std::size_t n = std::min(out.size(), size_);
    for (std::size_t i = 0; i < n; ++i) out[i] = time_[i] * scale;
  }

 private:
  void swap(RealFft& other) noexcept {
    std::swap(size_, other.size_);
    std::swap(time_, other.time_);
    std::swap(freq_, other.freq_);
    std::swap(forward_, other.forward_);
    std::swap(inverse_, other.inverse_);
  }

  std::size_t size_ = 0;
  double* time_ = nullptr;
  fftw_complex* freq_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace sgjmap
