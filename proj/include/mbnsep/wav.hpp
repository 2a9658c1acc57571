// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mbnsep/util.hpp"

namespace mbnsep {

struct AudioBuffer {
  int sample_rate = 8000;
  std::vector<std::vector<double>> channels;

  size_t num_frames() const { return channels.empty() ? 0 : channels[0].size(); }
  size_t num_channels() const { return channels.size(); }
};

enum class WavEncoding : uint16_t { Pcm16 = 1, Float32 = 3 };

namespace detail {

template <typename T>
T wav_get(const std::string& buf, size_t pos, const std::string& path) {
  require(pos + sizeof(T) <= buf.size(), path, ": truncated WAV file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

}  // namespace detail

// PCM 16-bit and IEEE float 32-bit, mono or 2-channel. No resampling:
// callers check the rate against their configuration.
inline AudioBuffer read_wav(const std::string& path) {
  const std::string buf = read_file(path);
  require(buf.size() >= 44 && std::memcmp(buf.data(), "RIFF", 4) == 0 &&
              std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          path, ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_pos = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id = buf.substr(pos, 4);
    const uint32_t len = detail::wav_get<uint32_t>(buf, pos + 4, path);
    pos += 8;
    if (id == "fmt ") {
      require(len >= 16, path, ": malformed fmt chunk");
      format = detail::wav_get<uint16_t>(buf, pos, path);
      channels = detail::wav_get<uint16_t>(buf, pos + 2, path);
      rate = detail::wav_get<uint32_t>(buf, pos + 4, path);
      bits = detail::wav_get<uint16_t>(buf, pos + 14, path);
    } else if (id == "data") {
      data_pos = pos;
      data_len = len;
    }
    pos += len + (len & 1);
  }
  require(format != 0, path, ": missing fmt chunk");
  require(data_pos != 0, path, ": missing data chunk");
  require(data_pos + data_len <= buf.size(), path, ": data chunk overruns file");
  require(channels == 1 || channels == 2, path, ": unsupported channel count ", channels);
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  require(pcm16 || f32, path, ": unsupported encoding (format=", format,
          ", bits=", bits, "); only 16-bit PCM and 32-bit float are supported");

  const size_t bytes_per_sample = pcm16 ? 2 : 4;
  const size_t frames = data_len / (bytes_per_sample * channels);
  AudioBuffer audio;
  audio.sample_rate = static_cast<int>(rate);
  audio.channels.assign(channels, std::vector<double>(frames));
  for (size_t f = 0; f < frames; ++f) {
    for (uint16_t c = 0; c < channels; ++c) {
      const size_t off = data_pos + (f * channels + c) * bytes_per_sample;
      if (pcm16) {
        const int16_t s = detail::wav_get<int16_t>(buf, off, path);
        audio.channels[c][f] = static_cast<double>(s) / 32768.0;
      } else {
        audio.channels[c][f] = detail::wav_get<float>(buf, off, path);
      }
    }
  }
  return audio;
}

inline void write_wav(const std::string& path, const AudioBuffer& audio,
                      WavEncoding encoding = WavEncoding::Float32) {
  require(!audio.channels.empty(), path, ": no channels to write");
  require(audio.channels.size() <= 2, path, ": unsupported channel count ",
          audio.channels.size());
  const size_t frames = audio.num_frames();
  for (const auto& ch : audio.channels)
    require(ch.size() == frames, path, ": channel lengths differ");

  const uint16_t channels = static_cast<uint16_t>(audio.channels.size());
  const uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const uint32_t byte_rate = static_cast<uint32_t>(audio.sample_rate) * channels * bits / 8;
  const uint16_t block_align = channels * bits / 8;
  const uint32_t data_len = static_cast<uint32_t>(frames * block_align);

  std::string buf;
  buf.reserve(44 + data_len);
  auto put16 = [&](uint16_t v) { buf.append(reinterpret_cast<const char*>(&v), 2); };
  auto put32 = [&](uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); };
  buf.append("RIFF", 4);
  put32(36 + data_len);
  buf.append("WAVE", 4);
  buf.append("fmt ", 4);
  put32(16);
  put16(static_cast<uint16_t>(encoding));
  put16(channels);
  put32(static_cast<uint32_t>(audio.sample_rate));
  put32(byte_rate);
  put16(block_align);
  put16(bits);
  buf.append("data", 4);
  put32(data_len);
  for (size_t f = 0; f < frames; ++f) {
    for (uint16_t c = 0; c < channels; ++c) {
      const double v = audio.channels[c][f];
      if (encoding == WavEncoding::Pcm16) {
        const double clamped = std::clamp(v, -1.0, 32767.0 / 32768.0);
        const int16_t s = static_cast<int16_t>(std::lrint(clamped * 32768.0));
        buf.append(reinterpret_cast<const char*>(&s), 2);
      } else {
        const float s = static_cast<float>(v);
        buf.append(reinterpret_cast<const char*>(&s), 4);
      }
    }
  }
  atomic_write_file(path, buf);
}

}  // namespace mbnsep
