// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mbnsep/parallel.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

// Analysis framing: 32 ms Hamming frames with an 8 ms hop at 8 kHz,
// one-sided spectra of frame_len/2 + 1 bins (129 at the defaults).
struct StftConfig {
  int sample_rate = 8000;
  int frame_len = 256;
  int hop = 64;

  int bins() const { return frame_len / 2 + 1; }

  void validate() const {
    require(sample_rate > 0, "stft.sample_rate must be positive, got ", sample_rate);
    require(frame_len >= 2, "stft.frame_len must be at least 2, got ", frame_len);
    require(hop >= 1, "stft.hop must be at least 1, got ", hop);
    require(hop <= frame_len, "stft.hop (", hop, ") must not exceed stft.frame_len (",
            frame_len, ")");
  }
};

struct Spectrogram {
  Eigen::MatrixXcd data;  // frames x bins
  StftConfig config;
  size_t original_len = 0;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index bins() const { return data.cols(); }
};

// Periodic Hamming window.
inline std::vector<double> hamming_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

namespace detail {

// Iterative radix-2 FFT for power-of-two sizes, naive DFT otherwise
// (frames are short, so the fallback stays affordable).
class FftPlan {
 public:
  explicit FftPlan(int n) : n_(n), pow2_((n & (n - 1)) == 0) {
    if (pow2_) {
      bitrev_.resize(n);
      int log2n = 0;
      while ((1 << log2n) < n) ++log2n;
      for (int i = 0; i < n; ++i) {
        int r = 0;
        for (int b = 0; b < log2n; ++b) r |= ((i >> b) & 1) << (log2n - 1 - b);
        bitrev_[i] = r;
      }
      twiddles_.resize(n / 2);
      for (int i = 0; i < n / 2; ++i)
        twiddles_[i] = std::polar(1.0, -2.0 * std::numbers::pi * i / n);
    } else {
      dft_table_.resize(n);
      for (int i = 0; i < n; ++i)
        dft_table_[i] = std::polar(1.0, -2.0 * std::numbers::pi * i / n);
    }
  }

  int size() const { return n_; }

  void forward(std::vector<std::complex<double>>& x) const { run(x, false); }
  void inverse(std::vector<std::complex<double>>& x) const {
    run(x, true);
    for (auto& v : x) v /= static_cast<double>(n_);
  }

 private:
  void run(std::vector<std::complex<double>>& x, bool inv) const {
    if (pow2_) {
      for (int i = 0; i < n_; ++i)
        if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
      for (int len = 2; len <= n_; len <<= 1) {
        const int stride = n_ / len;
        for (int start = 0; start < n_; start += len) {
          for (int i = 0; i < len / 2; ++i) {
            std::complex<double> w = twiddles_[i * stride];
            if (inv) w = std::conj(w);
            const std::complex<double> a = x[start + i];
            const std::complex<double> b = x[start + i + len / 2] * w;
            x[start + i] = a + b;
            x[start + i + len / 2] = a - b;
          }
        }
      }
    } else {
      std::vector<std::complex<double>> out(n_);
      for (int k = 0; k < n_; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (int t = 0; t < n_; ++t) {
          std::complex<double> w = dft_table_[static_cast<size_t>(k) * t % n_];
          if (inv) w = std::conj(w);
          acc += x[t] * w;
        }
        out[k] = acc;
      }
      x = std::move(out);
    }
  }

  int n_;
  bool pow2_;
  std::vector<int> bitrev_;
  std::vector<std::complex<double>> twiddles_;
  std::vector<std::complex<double>> dft_table_;
};

}  // namespace detail

// Frame t covers samples [t*hop, t*hop + frame_len); the tail is zero-padded
// to a whole frame count and the true length kept for resynthesis.
inline Spectrogram stft(const std::vector<double>& wave, const StftConfig& config = {}) {
  config.validate();
  const size_t n = wave.size();
  const size_t frame_len = static_cast<size_t>(config.frame_len);
  const size_t hop = static_cast<size_t>(config.hop);
  require(n >= frame_len, "stft: input of ", n, " samples is shorter than one frame (",
          frame_len, ")");

  const size_t frames = 1 + (n - frame_len + hop - 1) / hop;
  const int bins = config.bins();
  const std::vector<double> window = hamming_window(config.frame_len);
  const detail::FftPlan plan(config.frame_len);

  Spectrogram spec;
  spec.config = config;
  spec.original_len = n;
  spec.data.resize(static_cast<Eigen::Index>(frames), bins);

  parallel_for(frames, [&](size_t t) {
    std::vector<std::complex<double>> buf(frame_len);
    const size_t start = t * hop;
    for (size_t i = 0; i < frame_len; ++i) {
      const size_t s = start + i;
      const double v = s < n ? wave[s] : 0.0;
      buf[i] = {v * window[i], 0.0};
    }
    plan.forward(buf);
    for (int k = 0; k < bins; ++k) spec.data(static_cast<Eigen::Index>(t), k) = buf[k];
  });
  return spec;
}

// Weighted overlap-add with the analysis window on the synthesis side and
// per-sample normalization by the summed squared window; exact inverse up to
// rounding wherever the normalizer is nonzero.
inline std::vector<double> istft(const Spectrogram& spec) {
  const StftConfig& config = spec.config;
  config.validate();
  const size_t frame_len = static_cast<size_t>(config.frame_len);
  const size_t hop = static_cast<size_t>(config.hop);
  const size_t frames = static_cast<size_t>(spec.frames());
  const int bins = config.bins();
  require(spec.bins() == bins, "istft: spectrogram has ", spec.bins(),
          " bins but the config implies ", bins);
  require(frames >= 1, "istft: empty spectrogram");

  const std::vector<double> window = hamming_window(config.frame_len);
  const detail::FftPlan plan(config.frame_len);

  const size_t padded_len = (frames - 1) * hop + frame_len;
  std::vector<double> out(padded_len, 0.0);
  std::vector<double> norm(padded_len, 0.0);

  std::vector<std::complex<double>> buf(frame_len);
  for (size_t t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) buf[k] = spec.data(static_cast<Eigen::Index>(t), k);
    for (size_t k = bins; k < frame_len; ++k)
      buf[k] = std::conj(buf[frame_len - k]);
    plan.inverse(buf);
    const size_t start = t * hop;
    for (size_t i = 0; i < frame_len; ++i) {
      out[start + i] += buf[i].real() * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }

  size_t out_len = spec.original_len ? std::min(spec.original_len, padded_len) : padded_len;
  std::vector<double> result(out_len);
  for (size_t i = 0; i < out_len; ++i) {
    require(norm[i] >= 1e-12, "istft: overlap-add normalizer vanishes at sample ", i);
    result[i] = out[i] / norm[i];
  }
  return result;
}

inline Eigen::MatrixXd magnitude(const Spectrogram& spec) {
  return spec.data.cwiseAbs();
}

}  // namespace mbnsep
