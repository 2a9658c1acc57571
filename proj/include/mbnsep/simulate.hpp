// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mbnsep/rng.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

// Two-channel mixture recipe. Delays are integer interchannel delays per
// source (channel 2 relative to channel 1); t60 = 0 selects the anechoic
// pure-delay path.
struct MixSpec {
  std::string id;
  std::vector<std::string> sources;
  std::vector<int> delays;
  double sir_db = 0.0;
  double t60 = 0.0;
  uint64_t seed = 0;

  void validate() const {
    require(!sources.empty(), "mix: no sources given");
    require(delays.size() == sources.size(), "mix: ", sources.size(), " sources but ",
            delays.size(), " delays");
    for (int d : delays)
      require(std::abs(d) <= 8, "mix: |delay| must be at most 8 samples, got ", d);
    require(t60 == 0.0 || (t60 >= 0.05 && t60 <= 1.0),
            "mix: t60 must be 0 or within [0.05, 1.0] seconds, got ", t60);
  }
};

struct Mixture {
  std::vector<std::vector<double>> channels;                // 2 waveforms
  std::vector<std::vector<std::vector<double>>> images;     // source x channel
  MixSpec spec;
  int sample_rate = 8000;
};

// Synthetic RIR: a unit direct impulse plus, for t60 > 0, a seeded white
// noise tail whose amplitude envelope decays 60 dB of energy at t60. The tail
// is scaled to a 0 dB direct-to-reverberant ratio.
inline std::vector<double> synth_rir(double t60, int direct_delay, int sample_rate,
                                     uint64_t seed) {
  require(t60 >= 0.0, "synth_rir: t60 must be nonnegative, got ", t60);
  require(direct_delay >= 0, "synth_rir: direct delay must be nonnegative, got ",
          direct_delay);
  std::vector<double> h(static_cast<size_t>(direct_delay) + 1, 0.0);
  h[direct_delay] = 1.0;
  if (t60 <= 0.0) return h;

  const size_t tail_len = static_cast<size_t>(std::ceil(t60 * sample_rate));
  RngStream rng = derive_stream(seed, {0x726972, static_cast<uint64_t>(direct_delay)});
  std::vector<double> tail(tail_len);
  double tail_energy = 0.0;
  for (size_t i = 0; i < tail_len; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double envelope = std::pow(10.0, -3.0 * t / t60);
    tail[i] = rng.normal() * envelope;
    tail_energy += tail[i] * tail[i];
  }
  require(tail_energy > 0.0, "synth_rir: degenerate tail");
  const double scale = 1.0 / std::sqrt(tail_energy);  // direct energy is 1
  h.resize(static_cast<size_t>(direct_delay) + 1 + tail_len, 0.0);
  for (size_t i = 0; i < tail_len; ++i) h[direct_delay + 1 + i] = tail[i] * scale;
  return h;
}

namespace detail {

inline std::vector<double> convolve_trunc(const std::vector<double>& x,
                                          const std::vector<double>& h, size_t out_len) {
  std::vector<double> y(out_len, 0.0);
  for (size_t i = 0; i < out_len; ++i) {
    double acc = 0.0;
    const size_t kmax = std::min(h.size() - 1, i);
    for (size_t k = 0; k <= kmax; ++k) acc += h[k] * x[i - k];
    y[i] = acc;
  }
  return y;
}

}  // namespace detail

// Builds per-source per-channel images by RIR convolution (pure integer
// delays when anechoic), scales interferers so each one sits sir_db below
// source 1 on channel 1, and sums the images into the two channels. The
// channels equal the image sums exactly.
inline Mixture mix(const MixSpec& spec, const std::vector<std::vector<double>>& source_waves,
                   int sample_rate = 8000) {
  spec.validate();
  require(source_waves.size() == spec.sources.size(), "mix: spec lists ",
          spec.sources.size(), " sources but ", source_waves.size(), " waveforms given");
  size_t common_len = source_waves[0].size();
  for (const auto& w : source_waves) common_len = std::min(common_len, w.size());
  require(common_len > 0, "mix: empty source waveform");

  const size_t n_src = source_waves.size();
  Mixture out;
  out.spec = spec;
  out.sample_rate = sample_rate;
  out.images.assign(n_src, std::vector<std::vector<double>>(2));

  // Unit-gain channel-1 images set the SIR-derived gains.
  std::vector<double> gains(n_src, 1.0);
  std::vector<std::vector<std::vector<double>>> rirs(n_src, std::vector<std::vector<double>>(2));
  for (size_t s = 0; s < n_src; ++s) {
    const int delay = spec.delays[s];
    const int d1 = std::max(0, -delay);
    const int d2 = std::max(0, delay);
    if (spec.t60 == 0.0) {
      rirs[s][0].assign(static_cast<size_t>(d1) + 1, 0.0);
      rirs[s][0][d1] = 1.0;
      rirs[s][1].assign(static_cast<size_t>(d2) + 1, 0.0);
      rirs[s][1][d2] = 1.0;
    } else {
      rirs[s][0] = synth_rir(spec.t60, d1, sample_rate, derive_stream(spec.seed, {s, 0}).u64());
      rirs[s][1] = synth_rir(spec.t60, d2, sample_rate, derive_stream(spec.seed, {s, 1}).u64());
    }
  }

  std::vector<double> ch1_energy(n_src, 0.0);
  for (size_t s = 0; s < n_src; ++s) {
    std::vector<double> trimmed(source_waves[s].begin(), source_waves[s].begin() + common_len);
    for (int c = 0; c < 2; ++c)
      out.images[s][c] = detail::convolve_trunc(trimmed, rirs[s][c], common_len);
    for (double v : out.images[s][0]) ch1_energy[s] += v * v;
    require(ch1_energy[s] > 0.0, "mix: source ", s + 1, " (", spec.sources[s],
            ") is silent on channel 1");
  }
  for (size_t s = 1; s < n_src; ++s)
    gains[s] = std::sqrt(ch1_energy[0] / ch1_energy[s] * std::pow(10.0, -spec.sir_db / 10.0));

  for (size_t s = 0; s < n_src; ++s)
    for (int c = 0; c < 2; ++c)
      for (double& v : out.images[s][c]) v *= gains[s];

  out.channels.assign(2, std::vector<double>(common_len, 0.0));
  for (int c = 0; c < 2; ++c)
    for (size_t s = 0; s < n_src; ++s)
      for (size_t i = 0; i < common_len; ++i) out.channels[c][i] += out.images[s][c][i];
  return out;
}

// Manifest rows: id,sources,delays,sir_db,t60,seed with ';'-separated lists.
inline std::vector<MixSpec> parse_manifest(const std::string& text, const std::string& path) {
  std::vector<MixSpec> specs;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.rfind("id,", 0) == 0) continue;  // header

    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    require(fields.size() == 6, path, ":", line_no,
            ": expected 6 fields (id,sources,delays,sir_db,t60,seed), got ", fields.size());

    MixSpec spec;
    spec.id = fields[0];
    std::istringstream srcs(fields[1]);
    while (std::getline(srcs, field, ';'))
      if (!field.empty()) spec.sources.push_back(field);
    std::istringstream dels(fields[2]);
    while (std::getline(dels, field, ';'))
      if (!field.empty()) spec.delays.push_back(std::stoi(field));
    try {
      spec.sir_db = std::stod(fields[3]);
      spec.t60 = std::stod(fields[4]);
      spec.seed = std::stoull(fields[5]);
    } catch (const std::exception&) {
      fail(path, ":", line_no, ": malformed numeric field");
    }
    try {
      spec.validate();
    } catch (const Error& e) {
      fail(path, ":", line_no, ": ", e.what());
    }
    specs.push_back(std::move(spec));
  }
  require(!specs.empty(), path, ": manifest has no mixtures");
  return specs;
}

inline std::string manifest_to_csv(const std::vector<MixSpec>& specs) {
  std::string out = "id,sources,delays,sir_db,t60,seed\n";
  for (const MixSpec& s : specs) {
    out += s.id + ",";
    for (size_t i = 0; i < s.sources.size(); ++i)
      out += (i ? ";" : "") + s.sources[i];
    out += ",";
    for (size_t i = 0; i < s.delays.size(); ++i)
      out += (i ? ";" : "") + std::to_string(s.delays[i]);
    out += detail::str(",", s.sir_db, ",", s.t60, ",", s.seed, "\n");
  }
  return out;
}

}  // namespace mbnsep
