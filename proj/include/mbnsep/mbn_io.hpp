// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>

#include "mbnsep/mbn.hpp"
#include "mbnsep/tensor_io.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

// MBNM model container (little-endian throughout):
//   magic "MBNM" | u8 version (1)
//   config: u32 V | f64 a | u32 k1 | f64 delta | u32 n_classes |
//           u32 output_dim | u64 seed
//   u64 input_dim | u32 layer count L
//   per layer: u32 k | u8 metric (0 sq-euclidean, 1 dot) | u64 layer input dim |
//     per clustering: u32 d_hat | d_hat x u32 feature indices |
//                     k x d_hat float32 centroids, row-major
//   pca: u64 code dim | u32 output_dim | code_dim x f32 mean |
//        output_dim x code_dim f32 components, row-major |
//        output_dim x f32 explained variance | u8 rank-deficient flag

namespace detail {

constexpr uint8_t kModelVersion = 1;

}  // namespace detail

inline void save_model(const MbnModel& model, const std::string& path) {
  std::string buf;
  buf.append("MBNM", 4);
  detail::put_raw(buf, detail::kModelVersion);
  detail::put_raw(buf, model.config.V);
  detail::put_raw(buf, model.config.a);
  detail::put_raw(buf, model.config.k1);
  detail::put_raw(buf, model.config.delta);
  detail::put_raw(buf, model.config.n_classes);
  detail::put_raw(buf, model.config.output_dim);
  detail::put_raw(buf, model.config.seed);
  detail::put_raw(buf, model.input_dim);
  detail::put_raw(buf, static_cast<uint32_t>(model.layers.size()));

  for (const MbnLayer& layer : model.layers) {
    detail::put_raw(buf, layer.k);
    detail::put_raw(buf, static_cast<uint8_t>(layer.metric));
    detail::put_raw(buf, layer.input_dim);
    for (const KCentroidsClustering& c : layer.clusterings) {
      const uint32_t d_hat = static_cast<uint32_t>(c.feature_indices.size());
      detail::put_raw(buf, d_hat);
      for (uint32_t f : c.feature_indices) detail::put_raw(buf, f);
      if (c.metric == Metric::SquaredEuclidean) {
        for (uint32_t j = 0; j < layer.k; ++j)
          for (uint32_t s = 0; s < d_hat; ++s)
            detail::put_raw(buf, static_cast<float>(c.centroids(j, s)));
      } else {
        // Dot-product centroids are 0/1 rows over the feature subset;
        // materialize them densely for the container.
        for (uint32_t j = 0; j < layer.k; ++j) {
          const auto& act = c.centroid_active[j];
          for (uint32_t s = 0; s < d_hat; ++s) {
            const bool on = std::binary_search(act.begin(), act.end(), c.feature_indices[s]);
            detail::put_raw(buf, on ? 1.0f : 0.0f);
          }
        }
      }
    }
  }

  const uint64_t code_dim = static_cast<uint64_t>(model.pca_mean.size());
  detail::put_raw(buf, code_dim);
  detail::put_raw(buf, static_cast<uint32_t>(model.pca_components.rows()));
  for (uint64_t i = 0; i < code_dim; ++i)
    detail::put_raw(buf, static_cast<float>(model.pca_mean(static_cast<Eigen::Index>(i))));
  for (Eigen::Index r = 0; r < model.pca_components.rows(); ++r)
    for (Eigen::Index c = 0; c < model.pca_components.cols(); ++c)
      detail::put_raw(buf, static_cast<float>(model.pca_components(r, c)));
  for (Eigen::Index r = 0; r < model.pca_components.rows(); ++r)
    detail::put_raw(buf, static_cast<float>(model.pca_explained(r)));
  detail::put_raw(buf, static_cast<uint8_t>(model.pca_rank_deficient ? 1 : 0));
  atomic_write_file(path, buf);
}

inline MbnModel load_model(const std::string& path) {
  const std::string buf = read_file(path);
  require(buf.size() >= 5 && std::memcmp(buf.data(), "MBNM", 4) == 0,
          path, ": not an MBNM model (bad magic)");
  size_t pos = 4;
  const uint8_t version = detail::get_raw<uint8_t>(buf, pos, path);
  require(version == detail::kModelVersion, path, ": unsupported MBNM version ",
          static_cast<int>(version));

  MbnModel model;
  model.config.V = detail::get_raw<uint32_t>(buf, pos, path);
  model.config.a = detail::get_raw<double>(buf, pos, path);
  model.config.k1 = detail::get_raw<uint32_t>(buf, pos, path);
  model.config.delta = detail::get_raw<double>(buf, pos, path);
  model.config.n_classes = detail::get_raw<uint32_t>(buf, pos, path);
  model.config.output_dim = detail::get_raw<uint32_t>(buf, pos, path);
  model.config.seed = detail::get_raw<uint64_t>(buf, pos, path);
  model.input_dim = detail::get_raw<uint64_t>(buf, pos, path);
  const uint32_t n_layers = detail::get_raw<uint32_t>(buf, pos, path);
  require(n_layers >= 1 && n_layers <= 64, path, ": implausible layer count ", n_layers);

  model.layers.resize(n_layers);
  for (uint32_t l = 0; l < n_layers; ++l) {
    MbnLayer& layer = model.layers[l];
    layer.k = detail::get_raw<uint32_t>(buf, pos, path);
    const uint8_t metric = detail::get_raw<uint8_t>(buf, pos, path);
    require(metric <= 1, path, ": bad metric byte ", static_cast<int>(metric));
    layer.metric = static_cast<Metric>(metric);
    layer.input_dim = detail::get_raw<uint64_t>(buf, pos, path);
    layer.clusterings.resize(model.config.V);
    for (uint32_t v = 0; v < model.config.V; ++v) {
      KCentroidsClustering& c = layer.clusterings[v];
      c.metric = layer.metric;
      const uint32_t d_hat = detail::get_raw<uint32_t>(buf, pos, path);
      require(d_hat >= 1 && d_hat <= layer.input_dim, path, ": bad feature count ", d_hat);
      c.feature_indices.resize(d_hat);
      for (uint32_t s = 0; s < d_hat; ++s) {
        c.feature_indices[s] = detail::get_raw<uint32_t>(buf, pos, path);
        require(c.feature_indices[s] < layer.input_dim, path, ": feature index out of range");
      }
      if (layer.metric == Metric::SquaredEuclidean) {
        c.centroids.resize(layer.k, d_hat);
        for (uint32_t j = 0; j < layer.k; ++j)
          for (uint32_t s = 0; s < d_hat; ++s)
            c.centroids(j, s) = detail::get_raw<float>(buf, pos, path);
      } else {
        c.centroid_active.resize(layer.k);
        for (uint32_t j = 0; j < layer.k; ++j) {
          for (uint32_t s = 0; s < d_hat; ++s) {
            const float w = detail::get_raw<float>(buf, pos, path);
            if (w >= 0.5f) c.centroid_active[j].push_back(c.feature_indices[s]);
          }
          std::sort(c.centroid_active[j].begin(), c.centroid_active[j].end());
        }
        c.build_index();
      }
    }
  }

  const uint64_t code_dim = detail::get_raw<uint64_t>(buf, pos, path);
  require(code_dim == model.layers.back().output_dim(), path,
          ": PCA dimension does not match the top layer");
  const uint32_t out_dim = detail::get_raw<uint32_t>(buf, pos, path);
  model.pca_mean.resize(static_cast<Eigen::Index>(code_dim));
  for (uint64_t i = 0; i < code_dim; ++i)
    model.pca_mean(static_cast<Eigen::Index>(i)) = detail::get_raw<float>(buf, pos, path);
  model.pca_components.resize(out_dim, static_cast<Eigen::Index>(code_dim));
  for (Eigen::Index r = 0; r < model.pca_components.rows(); ++r)
    for (Eigen::Index c = 0; c < model.pca_components.cols(); ++c)
      model.pca_components(r, c) = detail::get_raw<float>(buf, pos, path);
  model.pca_explained.resize(out_dim);
  for (uint32_t r = 0; r < out_dim; ++r)
    model.pca_explained(r) = detail::get_raw<float>(buf, pos, path);
  model.pca_rank_deficient = detail::get_raw<uint8_t>(buf, pos, path) != 0;
  require(pos == buf.size(), path, ": trailing bytes after model payload");
  return model;
}

}  // namespace mbnsep
