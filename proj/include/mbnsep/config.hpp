// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "mbnsep/mbn.hpp"
#include "mbnsep/signal.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

// Flat "section.key = value" text config; '#' starts a comment. Every field
// is validated against the owning module's preconditions before any work
// starts.
struct PipelineConfig {
  StftConfig stft;
  MbnConfig mbn;
  std::string embedder_kind = "oracle";  // oracle | file
  double embedder_sigma = 0.0;
  uint32_t embedding_dim = 40;
  int n_speakers = 2;
  int kmeans_restarts = 10;
  bool use_mbn = true;
  bool vad = true;
  double vad_range_db = 40.0;
  uint64_t seed = 0;

  void validate() const {
    require(n_speakers >= 2, "separate.speakers must be at least 2, got ", n_speakers);
    require(n_speakers <= 5, "separate.speakers above 5 is unsupported (permutation"
            " search), got ", n_speakers);
    stft.validate();
    mbn.validate();
    plan_k_schedule(mbn.k1, mbn.delta, mbn.n_classes);
    require(embedder_kind == "oracle" || embedder_kind == "file",
            "embed.kind must be 'oracle' or 'file', got '", embedder_kind, "'");
    require(embedder_sigma >= 0.0, "embed.sigma must be nonnegative, got ", embedder_sigma);
    require(embedding_dim >= 1, "embed.dim must be at least 1, got ", embedding_dim);
    require(static_cast<int>(embedding_dim) >= n_speakers, "embed.dim = ", embedding_dim,
            " must be at least separate.speakers = ", n_speakers);
    require(kmeans_restarts >= 1, "separate.restarts must be at least 1, got ",
            kmeans_restarts);
    require(vad_range_db > 0.0, "separate.vad_db must be positive, got ", vad_range_db);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  size_t b = s.find_last_not_of(" \t");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  require(!in.fail() && in.eof(), "config: bad value '", value, "' for ", key);
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  fail("config: bad boolean '", value, "' for ", key);
}

}  // namespace detail

inline PipelineConfig parse_config(const std::string& text, const std::string& path) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, path, ":", line_no, ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    require(!key.empty() && !value.empty(), path, ":", line_no, ": empty key or value");

    if (key == "stft.sample_rate") cfg.stft.sample_rate = detail::parse_number<int>(key, value);
    else if (key == "stft.frame_len") cfg.stft.frame_len = detail::parse_number<int>(key, value);
    else if (key == "stft.hop") cfg.stft.hop = detail::parse_number<int>(key, value);
    else if (key == "mbn.v") cfg.mbn.V = detail::parse_number<uint32_t>(key, value);
    else if (key == "mbn.a") cfg.mbn.a = detail::parse_number<double>(key, value);
    else if (key == "mbn.k1") cfg.mbn.k1 = detail::parse_number<uint32_t>(key, value);
    else if (key == "mbn.delta") cfg.mbn.delta = detail::parse_number<double>(key, value);
    else if (key == "mbn.output_dim") cfg.mbn.output_dim = detail::parse_number<uint32_t>(key, value);
    else if (key == "embed.kind") cfg.embedder_kind = value;
    else if (key == "embed.sigma") cfg.embedder_sigma = detail::parse_number<double>(key, value);
    else if (key == "embed.dim") cfg.embedding_dim = detail::parse_number<uint32_t>(key, value);
    else if (key == "separate.speakers") cfg.n_speakers = detail::parse_number<int>(key, value);
    else if (key == "separate.restarts") cfg.kmeans_restarts = detail::parse_number<int>(key, value);
    else if (key == "separate.use_mbn") cfg.use_mbn = detail::parse_bool(key, value);
    else if (key == "separate.vad") cfg.vad = detail::parse_bool(key, value);
    else if (key == "separate.vad_db") cfg.vad_range_db = detail::parse_number<double>(key, value);
    else if (key == "seed") cfg.seed = detail::parse_number<uint64_t>(key, value);
    else fail(path, ":", line_no, ": unknown config key '", key, "'");
  }
  cfg.mbn.n_classes = static_cast<uint32_t>(cfg.n_speakers);
  cfg.mbn.seed = cfg.seed;
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg = parse_config(read_file(path), path);
  cfg.validate();
  return cfg;
}

}  // namespace mbnsep
