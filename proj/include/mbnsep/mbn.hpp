// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mbnsep/parallel.hpp"
#include "mbnsep/rng.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

// Multilayer bootstrap network: a bottom-up stack of k-centroids clustering
// ensembles. Each layer holds V clusterings trained independently by random
// feature sampling and random data sampling; a sample is encoded by the
// one-hot indicator of its nearest centroid in every clustering, and the V
// indicators concatenate into the next layer's input. The output layer is
// PCA over the top-layer codes.

struct MbnConfig {
  uint32_t V = 400;        // base clusterings per layer
  double a = 0.9;          // feature-sampling fraction
  uint32_t k1 = 20;        // bottom-layer centroid count
  double delta = 0.0;      // k decay per layer, in [0, 1)
  uint32_t n_classes = 2;  // expected cluster count O
  uint32_t output_dim = 2; // m-vector dimensionality
  uint64_t seed = 0;

  void validate() const {
    require(V >= 1, "mbn.v must be at least 1, got ", V);
    require(a > 0.0 && a <= 1.0, "mbn.a must lie in (0, 1], got ", a);
    require(k1 >= 2, "mbn.k1 must be at least 2, got ", k1);
    require(delta >= 0.0 && delta < 1.0, "mbn.delta must lie in [0, 1), got ", delta);
    require(n_classes >= 2, "mbn.n_classes must be at least 2, got ", n_classes);
    require(output_dim >= 1, "mbn.output_dim must be at least 1, got ", output_dim);
  }
};

enum class Metric : uint8_t { SquaredEuclidean = 0, DotProduct = 1 };

// One base learner: a random feature subset and k sampled data points.
// Bottom-layer clusterings compare by squared Euclidean distance over dense
// inputs; upper-layer ones by inner product over sparse indicator codes,
// where the centroids are themselves 0/1 rows and the product is the count
// of shared active dimensions.
struct KCentroidsClustering {
  std::vector<uint32_t> feature_indices;  // d_hat distinct input dims, as drawn
  Metric metric = Metric::SquaredEuclidean;
  Eigen::MatrixXd centroids;  // k x d_hat (squared-euclidean layers)

  // Dot-product layers: per centroid, the sorted original input dims that are
  // active in the sampled code and kept by the feature subset.
  std::vector<std::vector<uint32_t>> centroid_active;

  // Inverted index over centroid_active: for each input dim that appears in
  // some centroid, the centroids containing it.
  std::vector<uint32_t> index_dims;
  std::vector<uint32_t> index_offsets;
  std::vector<uint32_t> index_centroids;

  uint32_t k() const {
    return metric == Metric::SquaredEuclidean
               ? static_cast<uint32_t>(centroids.rows())
               : static_cast<uint32_t>(centroid_active.size());
  }

  void build_index() {
    std::vector<std::pair<uint32_t, uint32_t>> pairs;
    for (uint32_t j = 0; j < centroid_active.size(); ++j)
      for (uint32_t dim : centroid_active[j]) pairs.emplace_back(dim, j);
    std::sort(pairs.begin(), pairs.end());
    index_dims.clear();
    index_offsets.clear();
    index_centroids.clear();
    index_centroids.reserve(pairs.size());
    for (size_t p = 0; p < pairs.size(); ++p) {
      if (p == 0 || pairs[p].first != pairs[p - 1].first) {
        index_dims.push_back(pairs[p].first);
        index_offsets.push_back(static_cast<uint32_t>(p));
      }
      index_centroids.push_back(pairs[p].second);
    }
    index_offsets.push_back(static_cast<uint32_t>(pairs.size()));
  }
};

struct MbnLayer {
  std::vector<KCentroidsClustering> clusterings;
  uint32_t k = 0;
  Metric metric = Metric::SquaredEuclidean;
  uint64_t input_dim = 0;

  uint32_t V() const { return static_cast<uint32_t>(clusterings.size()); }
  uint64_t output_dim() const { return static_cast<uint64_t>(V()) * k; }
};

// One encoded sample: exactly V active indices, the v-th lying in block
// [v*k, (v+1)*k). The equivalent dense vector is 0/1 and sums to V.
struct SparseCode {
  std::vector<uint32_t> active;
};

// Row-major bulk storage of n sparse codes.
struct SparseCodes {
  uint64_t dim = 0;
  uint32_t actives_per_row = 0;
  std::vector<uint32_t> flat;

  size_t rows() const {
    return actives_per_row == 0 ? 0 : flat.size() / actives_per_row;
  }
  const uint32_t* row(size_t i) const { return flat.data() + i * actives_per_row; }
  uint32_t* row(size_t i) { return flat.data() + i * actives_per_row; }
};

struct PcaResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // output_dim x d, orthonormal rows
  Eigen::VectorXd explained_variance;
  bool rank_deficient = false;
};

struct MbnModel {
  std::vector<MbnLayer> layers;
  Eigen::VectorXd pca_mean;
  Eigen::MatrixXd pca_components;
  Eigen::VectorXd pca_explained;
  bool pca_rank_deficient = false;
  MbnConfig config;
  uint64_t input_dim = 0;

  size_t depth() const { return layers.size(); }
};

// k_1 is user-set; k_{l+1} = floor(delta * k_l), appended while it still
// exceeds ceil(1.5 * n_classes) so the top layer keeps at least one centroid
// per class in probability. delta <= 0.15 at k1 = 20 therefore yields a
// single hidden layer, larger delta a deep stack.
inline std::vector<uint32_t> plan_k_schedule(uint32_t k1, double delta, uint32_t n_classes) {
  require(delta >= 0.0 && delta < 1.0, "plan_k_schedule: delta must lie in [0, 1), got ", delta);
  require(n_classes >= 2, "plan_k_schedule: n_classes must be at least 2, got ", n_classes);
  const uint32_t k_min = static_cast<uint32_t>(std::ceil(1.5 * n_classes));
  require(k1 >= k_min, "plan_k_schedule: k1 = ", k1, " is below ceil(1.5 * n_classes) = ",
          k_min);
  std::vector<uint32_t> schedule{k1};
  for (;;) {
    const uint32_t next = static_cast<uint32_t>(std::floor(delta * schedule.back()));
    if (next <= k_min) break;
    schedule.push_back(next);
  }
  return schedule;
}

namespace detail {

inline uint32_t feature_count(double a, uint64_t d) {
  return static_cast<uint32_t>(std::max<int64_t>(1, std::llround(a * static_cast<double>(d))));
}

constexpr uint64_t kMbnTag = 0x6d626e;  // rng path tag for layer training

}  // namespace detail

// Bottom-layer base learner: d_hat random feature dims, then k random data
// points restricted to them, both without replacement.
inline KCentroidsClustering train_clustering(const Eigen::MatrixXd& data, uint32_t k,
                                             double a, RngStream& rng) {
  const uint64_t n = static_cast<uint64_t>(data.rows());
  const uint64_t d = static_cast<uint64_t>(data.cols());
  require(d >= 1, "train_clustering: data has no columns");
  require(n >= k, "train_clustering: insufficient data (n = ", n, " < k = ", k, ")");
  KCentroidsClustering c;
  c.metric = Metric::SquaredEuclidean;
  const uint32_t d_hat = detail::feature_count(a, d);
  c.feature_indices = rng.sample_without_replacement(d, d_hat);
  const std::vector<uint32_t> points = rng.sample_without_replacement(n, k);
  c.centroids.resize(k, d_hat);
  for (uint32_t j = 0; j < k; ++j)
    for (uint32_t s = 0; s < d_hat; ++s)
      c.centroids(j, s) = data(points[j], c.feature_indices[s]);
  return c;
}

// Upper-layer base learner over sparse codes; same sampling recipe, with the
// feature subset applied to the raw code dimensions.
inline KCentroidsClustering train_clustering_codes(const SparseCodes& codes, uint32_t k,
                                                   double a, RngStream& rng) {
  const uint64_t n = codes.rows();
  const uint64_t d = codes.dim;
  require(n >= k, "train_clustering: insufficient data (n = ", n, " < k = ", k, ")");
  KCentroidsClustering c;
  c.metric = Metric::DotProduct;
  const uint32_t d_hat = detail::feature_count(a, d);
  c.feature_indices = rng.sample_without_replacement(d, d_hat);
  const std::vector<uint32_t> points = rng.sample_without_replacement(n, k);
  std::vector<uint8_t> keep(d, 0);
  for (uint32_t f : c.feature_indices) keep[f] = 1;
  c.centroid_active.resize(k);
  for (uint32_t j = 0; j < k; ++j) {
    const uint32_t* row = codes.row(points[j]);
    for (uint32_t v = 0; v < codes.actives_per_row; ++v)
      if (keep[row[v]]) c.centroid_active[j].push_back(row[v]);
  }
  c.build_index();
  return c;
}

// Nearest centroid of the feature-restricted input; ties break to the lowest
// centroid index.
inline uint32_t encode_clustering(const KCentroidsClustering& c,
                                  const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  require(c.metric == Metric::SquaredEuclidean,
          "encode_clustering: dense input requires a squared-euclidean clustering");
  const uint32_t k = c.k();
  const uint32_t d_hat = static_cast<uint32_t>(c.feature_indices.size());
  uint32_t best = 0;
  double best_dist = 0.0;
  for (uint32_t j = 0; j < k; ++j) {
    double dist = 0.0;
    for (uint32_t s = 0; s < d_hat; ++s) {
      const double diff = c.centroids(j, s) - x[c.feature_indices[s]];
      dist += diff * diff;
    }
    if (j == 0 || dist < best_dist) {
      best_dist = dist;
      best = j;
    }
  }
  return best;
}

// Sparse-code variant: argmax of the inner product, i.e. the centroid sharing
// the most active dimensions with the input. Ties break to the lowest index.
inline uint32_t encode_clustering(const KCentroidsClustering& c, const uint32_t* active,
                                  uint32_t n_active) {
  require(c.metric == Metric::DotProduct,
          "encode_clustering: sparse input requires a dot-product clustering");
  const uint32_t k = c.k();
  std::vector<uint32_t> scores(k, 0);
  for (uint32_t v = 0; v < n_active; ++v) {
    const uint32_t dim = active[v];
    const auto it = std::lower_bound(c.index_dims.begin(), c.index_dims.end(), dim);
    if (it == c.index_dims.end() || *it != dim) continue;
    const size_t slot = static_cast<size_t>(it - c.index_dims.begin());
    for (uint32_t p = c.index_offsets[slot]; p < c.index_offsets[slot + 1]; ++p)
      scores[c.index_centroids[p]]++;
  }
  uint32_t best = 0;
  for (uint32_t j = 1; j < k; ++j)
    if (scores[j] > scores[best]) best = j;
  return best;
}

inline uint32_t encode_clustering(const KCentroidsClustering& c, const SparseCode& code) {
  return encode_clustering(c, code.active.data(), static_cast<uint32_t>(code.active.size()));
}

namespace detail {

template <typename EncodeOne>
void encode_layer_into(const MbnLayer& layer, EncodeOne&& encode_one, uint32_t* out) {
  for (uint32_t v = 0; v < layer.V(); ++v)
    out[v] = v * layer.k + encode_one(layer.clusterings[v]);
}

}  // namespace detail

// Applies every clustering in the layer; output has exactly V active indices,
// the v-th offset into its block.
inline SparseCode encode_layer(const MbnLayer& layer,
                               const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  require(layer.metric == Metric::SquaredEuclidean, "encode_layer: layer expects sparse input");
  require(static_cast<uint64_t>(x.size()) == layer.input_dim, "encode_layer: input has ",
          x.size(), " dims, layer expects ", layer.input_dim);
  SparseCode code;
  code.active.resize(layer.V());
  detail::encode_layer_into(
      layer, [&](const KCentroidsClustering& c) { return encode_clustering(c, x); },
      code.active.data());
  return code;
}

inline SparseCode encode_layer(const MbnLayer& layer, const SparseCode& in) {
  require(layer.metric == Metric::DotProduct, "encode_layer: layer expects dense input");
  SparseCode code;
  code.active.resize(layer.V());
  detail::encode_layer_into(
      layer, [&](const KCentroidsClustering& c) { return encode_clustering(c, in); },
      code.active.data());
  return code;
}

// ---------------------------------------------------------------------------
// PCA output layer.

namespace detail {

constexpr double kPcaRankEps = 1e-12;
constexpr size_t kPcaDensifyLimit = size_t{4} << 20;  // elements

inline void pca_sign_normalize(Eigen::MatrixXd& components) {
  for (Eigen::Index r = 0; r < components.rows(); ++r) {
    Eigen::Index imax = 0;
    components.row(r).cwiseAbs().maxCoeff(&imax);
    if (components(r, imax) < 0) components.row(r) = -components.row(r);
  }
}

// Completes `have` orthonormal rows to `want` rows with canonical basis
// vectors, Gram-Schmidt style.
inline void pca_complete_basis(Eigen::MatrixXd& components, Eigen::Index have) {
  const Eigen::Index want = components.rows();
  const Eigen::Index d = components.cols();
  Eigen::Index filled = have;
  for (Eigen::Index e = 0; e < d && filled < want; ++e) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    v[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index r = 0; r < filled; ++r)
        v -= components.row(r).dot(v) * components.row(r).transpose();
    const double norm = v.norm();
    if (norm > 1e-6) {
      components.row(filled++) = v.transpose() / norm;
    }
  }
  require(filled == want, "pca: failed to complete an orthonormal basis");
}

}  // namespace detail

// Top output_dim principal directions of the mean-centered data,
// sign-normalized so each component's largest-magnitude entry is positive.
// When the data rank falls short, the remaining components are zero-variance
// orthonormal directions and the result is flagged.
inline PcaResult pca_fit(const Eigen::MatrixXd& data, Eigen::Index output_dim) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  require(output_dim >= 1, "pca_fit: output_dim must be at least 1, got ", output_dim);
  require(output_dim <= d, "pca_fit: output_dim = ", output_dim,
          " exceeds the data dimension ", d);
  require(n > output_dim, "pca_fit: need more than output_dim = ", output_dim,
          " samples, got ", n);

  PcaResult res;
  res.mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - res.mean.transpose();
  res.components.resize(output_dim, d);
  res.explained_variance.resize(output_dim);

  if (n >= d) {
    const Eigen::MatrixXd scatter = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scatter);
    require(eig.info() == Eigen::Success, "pca_fit: eigendecomposition failed");
    const double lead = std::max(eig.eigenvalues()(d - 1), 0.0);
    for (Eigen::Index j = 0; j < output_dim; ++j) {
      const double lambda = std::max(eig.eigenvalues()(d - 1 - j), 0.0);
      res.components.row(j) = eig.eigenvectors().col(d - 1 - j).transpose();
      res.explained_variance[j] = lambda / static_cast<double>(n - 1);
      if (lambda <= detail::kPcaRankEps * std::max(lead, 1e-30)) res.rank_deficient = true;
    }
  } else {
    const Eigen::MatrixXd gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    require(eig.info() == Eigen::Success, "pca_fit: eigendecomposition failed");
    const double lead = std::max(eig.eigenvalues()(n - 1), 0.0);
    Eigen::Index filled = 0;
    for (Eigen::Index j = 0; j < output_dim; ++j) {
      const double lambda = std::max(eig.eigenvalues()(n - 1 - j), 0.0);
      if (lambda <= detail::kPcaRankEps * std::max(lead, 1e-30)) break;
      Eigen::VectorXd w = centered.transpose() * eig.eigenvectors().col(n - 1 - j);
      w /= std::sqrt(lambda);
      res.components.row(filled) = w.transpose() / w.norm();
      res.explained_variance[filled] = lambda / static_cast<double>(n - 1);
      ++filled;
    }
    if (filled < output_dim) {
      res.rank_deficient = true;
      for (Eigen::Index j = filled; j < output_dim; ++j) res.explained_variance[j] = 0.0;
      detail::pca_complete_basis(res.components, filled);
    }
  }
  detail::pca_sign_normalize(res.components);
  return res;
}

namespace detail {

inline Eigen::VectorXd codes_mean(const SparseCodes& codes) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(codes.dim));
  for (size_t i = 0; i < codes.rows(); ++i) {
    const uint32_t* row = codes.row(i);
    for (uint32_t v = 0; v < codes.actives_per_row; ++v) mean[row[v]] += 1.0;
  }
  return mean / static_cast<double>(codes.rows());
}

using RowMajorXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Column-wise view of the codes: for every dimension, the samples having it
// active, in ascending sample order.
struct CodesTranspose {
  std::vector<uint64_t> offsets;  // dim + 1
  std::vector<uint32_t> samples;
};

inline CodesTranspose codes_transpose(const SparseCodes& codes) {
  CodesTranspose t;
  t.offsets.assign(codes.dim + 1, 0);
  for (size_t i = 0; i < codes.rows(); ++i)
    for (uint32_t v = 0; v < codes.actives_per_row; ++v) t.offsets[codes.row(i)[v] + 1]++;
  for (uint64_t a = 0; a < codes.dim; ++a) t.offsets[a + 1] += t.offsets[a];
  t.samples.resize(codes.flat.size());
  std::vector<uint64_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
  for (size_t i = 0; i < codes.rows(); ++i)
    for (uint32_t v = 0; v < codes.actives_per_row; ++v)
      t.samples[cursor[codes.row(i)[v]]++] = static_cast<uint32_t>(i);
  return t;
}

// Scatter apply Z = Hc^T (Hc Q) for mean-centered sparse codes Hc = H - 1 mu^T.
// Rows of both intermediate products are computed independently, so the
// result is identical at any worker count.
inline Eigen::MatrixXd codes_scatter_apply(const SparseCodes& codes, const CodesTranspose& ct,
                                           const Eigen::VectorXd& mean,
                                           const Eigen::MatrixXd& q) {
  const size_t n = codes.rows();
  const Eigen::Index m = q.cols();
  const RowMajorXd qr = q;
  const Eigen::RowVectorXd mean_q = mean.transpose() * q;

  RowMajorXd y(n, m);
  parallel_for(n, [&](size_t i) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(m);
    const uint32_t* row = codes.row(i);
    for (uint32_t v = 0; v < codes.actives_per_row; ++v) acc += qr.row(row[v]);
    y.row(static_cast<Eigen::Index>(i)) = acc - mean_q;
  });

  Eigen::RowVectorXd colsum = Eigen::RowVectorXd::Zero(m);
  for (size_t i = 0; i < n; ++i) colsum += y.row(static_cast<Eigen::Index>(i));

  RowMajorXd z(static_cast<Eigen::Index>(codes.dim), m);
  parallel_for(codes.dim, [&](size_t a) {
    Eigen::RowVectorXd acc = -mean[static_cast<Eigen::Index>(a)] * colsum;
    for (uint64_t p = ct.offsets[a]; p < ct.offsets[a + 1]; ++p)
      acc += y.row(ct.samples[p]);
    z.row(static_cast<Eigen::Index>(a)) = acc;
  });
  return z;
}

inline Eigen::MatrixXd codes_densify(const SparseCodes& codes) {
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(codes.rows()),
                                                static_cast<Eigen::Index>(codes.dim));
  for (size_t i = 0; i < codes.rows(); ++i) {
    const uint32_t* row = codes.row(i);
    for (uint32_t v = 0; v < codes.actives_per_row; ++v)
      dense(static_cast<Eigen::Index>(i), row[v]) = 1.0;
  }
  return dense;
}

}  // namespace detail

// PCA over sparse codes. Small problems densify and reuse the exact solver;
// large ones run blocked subspace iteration against the implicit scatter
// operator, which only ever touches the codes through O(n V) work per pass.
inline PcaResult pca_fit_codes(const SparseCodes& codes, Eigen::Index output_dim) {
  const size_t n = codes.rows();
  const Eigen::Index d = static_cast<Eigen::Index>(codes.dim);
  require(output_dim >= 1, "pca_fit: output_dim must be at least 1, got ", output_dim);
  require(output_dim <= d, "pca_fit: output_dim = ", output_dim,
          " exceeds the code dimension ", d);
  require(n > static_cast<size_t>(output_dim), "pca_fit: need more than output_dim = ",
          output_dim, " samples, got ", n);

  if (n * codes.dim <= detail::kPcaDensifyLimit)
    return pca_fit(detail::codes_densify(codes), output_dim);

  PcaResult res;
  res.mean = detail::codes_mean(codes);
  const detail::CodesTranspose ct = detail::codes_transpose(codes);

  const Eigen::Index m = std::min<Eigen::Index>(output_dim + 8,
                                                std::min<Eigen::Index>(d, static_cast<Eigen::Index>(n)));
  RngStream rng = derive_stream(0x706361, {static_cast<uint64_t>(n), codes.dim,
                                           static_cast<uint64_t>(m)});
  Eigen::MatrixXd q(d, m);
  for (Eigen::Index c = 0; c < m; ++c)
    for (Eigen::Index r = 0; r < d; ++r) q(r, c) = rng.normal();
  q = Eigen::HouseholderQR<Eigen::MatrixXd>(q).householderQ() * Eigen::MatrixXd::Identity(d, m);

  // Blocked orthogonal iteration with Rayleigh-Ritz extraction; stop when the
  // Ritz residuals of the wanted pairs are small relative to the leading
  // eigenvalue.
  Eigen::MatrixXd z, rotated;
  Eigen::VectorXd ritz = Eigen::VectorXd::Zero(m);
  for (int iter = 0; iter < 2000; ++iter) {
    z = detail::codes_scatter_apply(codes, ct, res.mean, q);
    const Eigen::MatrixXd t = q.transpose() * z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(0.5 * (t + t.transpose()));
    require(small.info() == Eigen::Success, "pca_fit: subspace eigendecomposition failed");
    // Ritz pairs, leading first.
    Eigen::MatrixXd w(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      w.col(j) = small.eigenvectors().col(m - 1 - j);
      ritz[j] = small.eigenvalues()(m - 1 - j);
    }
    rotated = q * w;
    const double scale = std::max(std::abs(ritz[0]), 1e-30);
    double worst = 0.0;
    const Eigen::MatrixXd zw = z * w;
    for (Eigen::Index j = 0; j < output_dim; ++j)
      worst = std::max(worst, (zw.col(j) - ritz[j] * rotated.col(j)).norm() / scale);
    if (worst < 1e-10) break;
    q = Eigen::HouseholderQR<Eigen::MatrixXd>(z).householderQ() * Eigen::MatrixXd::Identity(d, m);
  }

  res.components.resize(output_dim, d);
  res.explained_variance.resize(output_dim);
  const double lead = std::max(ritz[0], 0.0);
  for (Eigen::Index j = 0; j < output_dim; ++j) {
    const double lambda = std::max(ritz[j], 0.0);
    res.components.row(j) = rotated.col(j).transpose();
    res.explained_variance[j] = lambda / static_cast<double>(n - 1);
    if (lambda <= detail::kPcaRankEps * std::max(lead, 1e-30)) res.rank_deficient = true;
  }
  detail::pca_sign_normalize(res.components);
  return res;
}

// ---------------------------------------------------------------------------
// Training and inference.

namespace detail {

inline SparseCodes encode_all(const MbnLayer& layer, const Eigen::MatrixXd& data) {
  SparseCodes codes;
  codes.dim = layer.output_dim();
  codes.actives_per_row = layer.V();
  codes.flat.resize(static_cast<size_t>(data.rows()) * layer.V());
  parallel_for(static_cast<size_t>(data.rows()), [&](size_t i) {
    encode_layer_into(
        layer,
        [&](const KCentroidsClustering& c) {
          return encode_clustering(c, data.row(static_cast<Eigen::Index>(i)));
        },
        codes.row(i));
  });
  return codes;
}

inline SparseCodes encode_all(const MbnLayer& layer, const SparseCodes& in) {
  SparseCodes codes;
  codes.dim = layer.output_dim();
  codes.actives_per_row = layer.V();
  codes.flat.resize(in.rows() * layer.V());
  parallel_for(in.rows(), [&](size_t i) {
    encode_layer_into(
        layer,
        [&](const KCentroidsClustering& c) {
          return encode_clustering(c, in.row(i), in.actives_per_row);
        },
        codes.row(i));
  });
  return codes;
}

}  // namespace detail

// Trains the full stack: layer 1 on the raw data with squared Euclidean
// matching, upper layers on the previous layer's codes with dot-product
// matching, k following the schedule, then the PCA output layer. The V
// clusterings of a layer train in parallel from streams derived from
// (seed, layer, clustering), so the model is reproducible at any worker
// count.
inline MbnModel fit(const Eigen::MatrixXd& data, const MbnConfig& config) {
  config.validate();
  const uint64_t n = static_cast<uint64_t>(data.rows());
  const uint64_t d = static_cast<uint64_t>(data.cols());
  require(d >= 1, "mbn fit: data has no columns");
  const std::vector<uint32_t> schedule = plan_k_schedule(config.k1, config.delta,
                                                         config.n_classes);
  require(n > config.k1, "mbn fit: insufficient data (n = ", n, " must exceed k1 = ",
          config.k1, ")");

  MbnModel model;
  model.config = config;
  model.input_dim = d;
  model.layers.resize(schedule.size());

  SparseCodes codes;
  for (size_t l = 0; l < schedule.size(); ++l) {
    MbnLayer& layer = model.layers[l];
    layer.k = schedule[l];
    layer.metric = l == 0 ? Metric::SquaredEuclidean : Metric::DotProduct;
    layer.input_dim = l == 0 ? d : codes.dim;
    layer.clusterings.resize(config.V);
    require(n > schedule[l], "mbn fit: insufficient data (n = ", n,
            " must exceed k = ", schedule[l], " at layer ", l + 1, ")");
    parallel_for(config.V, [&](size_t v) {
      RngStream rng = derive_stream(config.seed, {detail::kMbnTag, l, v});
      layer.clusterings[v] =
          l == 0 ? train_clustering(data, layer.k, config.a, rng)
                 : train_clustering_codes(codes, layer.k, config.a, rng);
    });
    codes = l == 0 ? detail::encode_all(layer, data) : detail::encode_all(layer, codes);
  }

  const PcaResult pca = pca_fit_codes(codes, config.output_dim);
  model.pca_mean = pca.mean;
  model.pca_components = pca.components;
  model.pca_explained = pca.explained_variance;
  model.pca_rank_deficient = pca.rank_deficient;
  return model;
}

namespace detail {

inline SparseCode encode_through(const MbnModel& model,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  SparseCode code = encode_layer(model.layers[0], x);
  for (size_t l = 1; l < model.layers.size(); ++l)
    code = encode_layer(model.layers[l], code);
  return code;
}

}  // namespace detail

// m-vector of one input: encode through every hidden layer, mean-center the
// top code and project.
inline Eigen::VectorXd transform(const MbnModel& model,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  require(!model.layers.empty(), "mbn transform: model has no layers");
  require(static_cast<uint64_t>(x.size()) == model.input_dim, "mbn transform: input has ",
          x.size(), " dims, model expects ", model.input_dim);
  const SparseCode code = detail::encode_through(model, x);
  Eigen::VectorXd y = -(model.pca_components * model.pca_mean);
  for (uint32_t a : code.active) y += model.pca_components.col(a);
  return y;
}

inline Eigen::MatrixXd transform_batch(const MbnModel& model, const Eigen::MatrixXd& data) {
  require(!model.layers.empty(), "mbn transform: model has no layers");
  require(static_cast<uint64_t>(data.cols()) == model.input_dim, "mbn transform: input has ",
          data.cols(), " dims, model expects ", model.input_dim);
  const Eigen::VectorXd offset = model.pca_components * model.pca_mean;
  Eigen::MatrixXd out(data.rows(), model.pca_components.rows());
  parallel_for(static_cast<size_t>(data.rows()), [&](size_t i) {
    const SparseCode code = detail::encode_through(model, data.row(static_cast<Eigen::Index>(i)));
    Eigen::VectorXd y = -offset;
    for (uint32_t a : code.active) y += model.pca_components.col(a);
    out.row(static_cast<Eigen::Index>(i)) = y.transpose();
  });
  return out;
}

}  // namespace mbnsep
