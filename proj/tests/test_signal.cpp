// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mbnsep/signal.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "mbnsep/rng.hpp"
#include "mbnsep/wav.hpp"
#include "support/oracles.hpp"

using namespace mbnsep;

namespace {

std::vector<double> random_wave(size_t n, uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> w(n);
  for (auto& v : w) v = rng.normal();
  return w;
}

double rel_rms_error(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("stft of silence is silent") {
  std::vector<double> wave(4000, 0.0);
  const Spectrogram spec = stft(wave);
  REQUIRE(spec.bins() == 129);
  REQUIRE(spec.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stft rejects waves shorter than one frame") {
  std::vector<double> wave(200, 0.1);
  REQUIRE_THROWS_AS(stft(wave), Error);
}

TEST_CASE("1 kHz sine at 8 kHz peaks at bin 32 in every frame") {
  std::vector<double> wave(8000);
  for (size_t i = 0; i < wave.size(); ++i)
    wave[i] = std::sin(2.0 * std::numbers::pi * 1000.0 * i / 8000.0);
  const Spectrogram spec = stft(wave);
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    Eigen::Index peak = 0;
    spec.data.row(t).cwiseAbs().maxCoeff(&peak);
    REQUIRE(peak == 32);
  }
}

TEST_CASE("unit impulse frame matches the naive DFT of the windowed frame") {
  std::vector<double> wave(512, 0.0);
  wave[0] = 1.0;
  const Spectrogram spec = stft(wave);

  const std::vector<double> window = hamming_window(256);
  std::vector<double> frame0(256, 0.0);
  frame0[0] = window[0];
  const auto ref = oracles::naive_dft(frame0);
  for (int k = 0; k < 129; ++k) {
    REQUIRE(std::abs(spec.data(0, k) - ref[k]) < 1e-6);
    // impulse at sample 0: flat spectrum at the window's first coefficient
    REQUIRE(std::abs(std::abs(spec.data(0, k)) - window[0]) < 1e-6);
  }
}

TEST_CASE("random frames match the naive DFT") {
  const std::vector<double> wave = random_wave(700, 7);
  const Spectrogram spec = stft(wave);
  const std::vector<double> window = hamming_window(256);
  for (Eigen::Index t : {Eigen::Index{0}, spec.frames() - 1}) {
    std::vector<double> frame(256, 0.0);
    for (size_t i = 0; i < 256; ++i) {
      const size_t s = static_cast<size_t>(t) * 64 + i;
      frame[i] = (s < wave.size() ? wave[s] : 0.0) * window[i];
    }
    const auto ref = oracles::naive_dft(frame);
    for (int k = 0; k < 129; ++k)
      REQUIRE(std::abs(spec.data(t, k) - ref[k]) < 1e-9);
  }
}

TEST_CASE("istft(stft(x)) reconstructs x") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    const std::vector<double> wave = random_wave(8000, seed);
    const std::vector<double> rec = istft(stft(wave));
    REQUIRE(rec.size() == wave.size());
    REQUIRE(rel_rms_error(rec, wave) < 1e-6);
  }
}

TEST_CASE("istft of a zero spectrogram is silence") {
  Spectrogram spec;
  spec.data = Eigen::MatrixXcd::Zero(10, 129);
  spec.original_len = 640;
  const auto wave = istft(spec);
  REQUIRE(wave.size() == 640);
  for (double v : wave) REQUIRE(v == 0.0);
}

TEST_CASE("istft is linear in the spectrogram") {
  const std::vector<double> wave = random_wave(2000, 11);
  Spectrogram spec = stft(wave);
  const std::vector<double> base = istft(spec);
  spec.data *= 2.5;
  const std::vector<double> scaled = istft(spec);
  for (size_t i = 0; i < base.size(); ++i)
    REQUIRE(scaled[i] == Catch::Approx(2.5 * base[i]).margin(1e-12));
}

TEST_CASE("stft is linear") {
  const std::vector<double> x = random_wave(3000, 21);
  const std::vector<double> y = random_wave(3000, 22);
  std::vector<double> mix(3000);
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = 2.0 * x[i] - 0.5 * y[i];
  const Spectrogram sx = stft(x), sy = stft(y), sm = stft(mix);
  const Eigen::MatrixXcd combo = 2.0 * sx.data - 0.5 * sy.data;
  REQUIRE((sm.data - combo).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("windowed frame energy matches spectrum energy (Parseval)") {
  const std::vector<double> wave = random_wave(1500, 31);
  const Spectrogram spec = stft(wave);
  const std::vector<double> window = hamming_window(256);
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    double time_energy = 0.0;
    for (size_t i = 0; i < 256; ++i) {
      const size_t s = static_cast<size_t>(t) * 64 + i;
      const double v = (s < wave.size() ? wave[s] : 0.0) * window[i];
      time_energy += v * v;
    }
    double freq_energy = std::norm(spec.data(t, 0)) + std::norm(spec.data(t, 128));
    for (int k = 1; k < 128; ++k) freq_energy += 2.0 * std::norm(spec.data(t, k));
    freq_energy /= 256.0;
    REQUIRE(freq_energy == Catch::Approx(time_energy).epsilon(1e-6).margin(1e-12));
  }
}

TEST_CASE("non-power-of-two frame lengths round-trip too") {
  StftConfig cfg;
  cfg.frame_len = 200;  // 25 ms at 8 kHz
  cfg.hop = 50;
  const std::vector<double> wave = random_wave(1600, 41);
  const std::vector<double> rec = istft(stft(wave, cfg));
  REQUIRE(rel_rms_error(rec, wave) < 1e-6);
}

TEST_CASE("wav round-trips float32 exactly and pcm16 approximately") {
  AudioBuffer buf;
  buf.sample_rate = 8000;
  buf.channels.resize(2);
  RngStream rng(55);
  for (auto& ch : buf.channels) {
    ch.resize(500);
    for (auto& v : ch) v = 0.5 * rng.normal();
  }
  // float32 payloads survive bit-exactly after the initial float cast
  write_wav("/tmp/mbnsep_test_f32.wav", buf, WavEncoding::Float32);
  const AudioBuffer f32 = read_wav("/tmp/mbnsep_test_f32.wav");
  REQUIRE(f32.sample_rate == 8000);
  REQUIRE(f32.num_channels() == 2);
  for (size_t c = 0; c < 2; ++c)
    for (size_t i = 0; i < 500; ++i)
      REQUIRE(f32.channels[c][i] == static_cast<double>(static_cast<float>(buf.channels[c][i])));

  write_wav("/tmp/mbnsep_test_p16.wav", buf, WavEncoding::Pcm16);
  const AudioBuffer p16 = read_wav("/tmp/mbnsep_test_p16.wav");
  for (size_t c = 0; c < 2; ++c)
    for (size_t i = 0; i < 500; ++i)
      REQUIRE(p16.channels[c][i] ==
              Catch::Approx(std::clamp(buf.channels[c][i], -1.0, 32767.0 / 32768.0))
                  .margin(1.0 / 32768.0));
}

TEST_CASE("wav reader rejects junk") {
  atomic_write_file("/tmp/mbnsep_test_junk.wav", "this is not a wav file at all......");
  REQUIRE_THROWS_AS(read_wav("/tmp/mbnsep_test_junk.wav"), Error);
}
