// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mbnsep/dpcl.hpp"
#include "mbnsep/features.hpp"
#include "mbnsep/kmeans.hpp"
#include "mbnsep/mbn.hpp"
#include "mbnsep/signal.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

// O binary masks that partition the T-F plane: mask o is 1 exactly where the
// unit is assigned to speaker o.
struct MaskSet {
  std::vector<Eigen::MatrixXd> masks;

  size_t speakers() const { return masks.size(); }
};

inline MaskSet masks_from_labels(const std::vector<int32_t>& labels, Eigen::Index frames,
                                 Eigen::Index bins, int n_speakers) {
  require(static_cast<Eigen::Index>(labels.size()) == frames * bins,
          "masks_from_labels: got ", labels.size(), " labels for ", frames, "x", bins,
          " units");
  MaskSet ms;
  ms.masks.assign(n_speakers, Eigen::MatrixXd::Zero(frames, bins));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index f = 0; f < bins; ++f) {
      const int32_t l = labels[static_cast<size_t>(t * bins + f)];
      require(l >= 0 && l < n_speakers, "masks_from_labels: label ", l,
              " out of range [0, ", n_speakers, ")");
      ms.masks[l](t, f) = 1.0;
    }
  }
  return ms;
}

inline std::vector<int32_t> labels_from_masks(const MaskSet& ms) {
  require(!ms.masks.empty(), "labels_from_masks: empty mask set");
  const Eigen::Index frames = ms.masks[0].rows();
  const Eigen::Index bins = ms.masks[0].cols();
  std::vector<int32_t> labels(static_cast<size_t>(frames * bins), -1);
  for (size_t o = 0; o < ms.masks.size(); ++o) {
    require(ms.masks[o].rows() == frames && ms.masks[o].cols() == bins,
            "labels_from_masks: mask shapes differ");
    for (Eigen::Index t = 0; t < frames; ++t)
      for (Eigen::Index f = 0; f < bins; ++f)
        if (ms.masks[o](t, f) != 0.0) labels[static_cast<size_t>(t * bins + f)] = static_cast<int32_t>(o);
  }
  for (int32_t l : labels) require(l >= 0, "labels_from_masks: masks do not cover the plane");
  return labels;
}

inline void validate_mask_partition(const MaskSet& ms) {
  require(!ms.masks.empty(), "mask set is empty");
  Eigen::MatrixXd sum = ms.masks[0];
  for (size_t o = 1; o < ms.masks.size(); ++o) sum += ms.masks[o];
  require((sum.array() == 1.0).all(), "masks do not partition the T-F plane");
}

// Per speaker: elementwise mask times the reference-channel complex
// spectrogram, then overlap-add resynthesis.
inline std::vector<std::vector<double>> apply_masks_and_resynthesize(
    const MaskSet& ms, const Spectrogram& mixture_spec) {
  std::vector<std::vector<double>> waves;
  waves.reserve(ms.masks.size());
  for (const Eigen::MatrixXd& mask : ms.masks) {
    require(mask.rows() == mixture_spec.frames() && mask.cols() == mixture_spec.bins(),
            "apply_masks: mask shape ", mask.rows(), "x", mask.cols(),
            " does not match the spectrogram ", mixture_spec.frames(), "x",
            mixture_spec.bins());
    Spectrogram masked = mixture_spec;
    masked.data = mixture_spec.data.cwiseProduct(mask.cast<std::complex<double>>());
    waves.push_back(istft(masked));
  }
  return waves;
}

struct SeparateOptions {
  bool use_mbn = true;  // off: cluster raw embeddings (plain DPCL baseline)
  bool vad = true;      // hold near-silent units out of fitting and clustering
  double vad_range_db = 40.0;
  int restarts = 10;
  uint64_t seed = 0;
};

struct SeparationResult {
  MaskSet masks;
  Eigen::MatrixXd mvectors;     // n x output_dim (or n x D with use_mbn = false)
  std::vector<int32_t> labels;  // per T-F unit
  std::vector<uint8_t> retained;
  KMeansResult clustering;
};

namespace detail {

constexpr uint64_t kSeparateTag = 0x736570;

}  // namespace detail

// Test-stage chain: embed every T-F unit, optionally hold out units whose
// reference-channel log-magnitude sits more than vad_range_db below the
// maximum, transform the retained units' embeddings with MBN, k-means the
// m-vectors into O clusters, assign held-out units to the nearest centroid,
// and emit the resulting binary masks.
inline SeparationResult separate(const FeatureTensor& features, const Embedder& embedder,
                                 const MbnConfig& mbn_config, int n_speakers,
                                 const SeparateOptions& options = {}) {
  require(n_speakers >= 2, "separate: need at least 2 speakers, got ", n_speakers);
  const EmbeddingMatrix emb = embedder.embed(features);
  validate_embeddings(emb);
  const Eigen::Index n = emb.rows();

  SeparationResult res;
  res.retained.assign(static_cast<size_t>(n), 1);
  if (options.vad) {
    const double max_log = features.log_mag1.maxCoeff();
    const double threshold = max_log - options.vad_range_db / 20.0 * std::log(10.0);
    const Eigen::Index bins = features.bins();
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool keep = features.log_mag1(i / bins, i % bins) > threshold;
      res.retained[static_cast<size_t>(i)] = keep ? 1 : 0;
      kept += keep;
    }
    // Degenerate inputs (near-uniform energy) fall back to using every unit.
    const Eigen::Index min_kept =
        std::max<Eigen::Index>(n_speakers, static_cast<Eigen::Index>(mbn_config.k1) + 1);
    if (kept < min_kept) res.retained.assign(static_cast<size_t>(n), 1);
  }

  std::vector<Eigen::Index> kept_rows;
  for (Eigen::Index i = 0; i < n; ++i)
    if (res.retained[static_cast<size_t>(i)]) kept_rows.push_back(i);

  Eigen::MatrixXd kept_data(static_cast<Eigen::Index>(kept_rows.size()), emb.dim());
  for (size_t r = 0; r < kept_rows.size(); ++r) kept_data.row(static_cast<Eigen::Index>(r)) = emb.data.row(kept_rows[r]);

  Eigen::MatrixXd kept_m;
  if (options.use_mbn) {
    MbnConfig cfg = mbn_config;
    cfg.n_classes = static_cast<uint32_t>(n_speakers);
    const MbnModel model = fit(kept_data, cfg);
    res.mvectors = transform_batch(model, emb.data);
    kept_m = transform_batch(model, kept_data);
  } else {
    res.mvectors = emb.data;
    kept_m = kept_data;
  }

  res.clustering = kmeans(kept_m, n_speakers, options.restarts,
                          derive_stream(options.seed, {detail::kSeparateTag, 1}).u64());
  res.labels.assign(static_cast<size_t>(n), -1);
  for (size_t r = 0; r < kept_rows.size(); ++r)
    res.labels[static_cast<size_t>(kept_rows[r])] = res.clustering.labels[r];
  for (Eigen::Index i = 0; i < n; ++i)
    if (res.labels[static_cast<size_t>(i)] < 0)
      res.labels[static_cast<size_t>(i)] =
          nearest_centroid(res.clustering.centroids, res.mvectors.row(i));

  res.masks = masks_from_labels(res.labels, features.frames(), features.bins(), n_speakers);
  return res;
}

}  // namespace mbnsep
