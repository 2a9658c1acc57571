// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <vector>

#include "mbnsep/parallel.hpp"
#include "mbnsep/rng.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

struct KMeansResult {
  std::vector<int32_t> labels;
  Eigen::MatrixXd centroids;  // O x dim
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

namespace detail {

constexpr uint64_t kKmeansTag = 0x6b6d65616e73;  // rng path tag

inline double sq_dist(const Eigen::MatrixXd& points, Eigen::Index i,
                      const Eigen::MatrixXd& centroids, Eigen::Index j) {
  return (points.row(i) - centroids.row(j)).squaredNorm();
}

inline KMeansResult kmeans_single(const Eigen::MatrixXd& points, int n_clusters,
                                  RngStream& rng, int max_iter) {
  const Eigen::Index n = points.rows();
  KMeansResult res;
  res.centroids.resize(n_clusters, points.cols());

  // k-means++ seeding.
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  res.centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(n)));
  for (int j = 1; j < n_clusters; ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], sq_dist(points, i, res.centroids, j - 1));
      total += dist2[i];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u = rng.real01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > u) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    res.centroids.row(j) = points.row(pick);
  }

  res.labels.assign(n, -1);
  std::vector<int32_t> prev(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment; ties go to the lowest centroid index.
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(points, i, res.centroids, 0);
      for (int j = 1; j < n_clusters; ++j) {
        const double d = sq_dist(points, i, res.centroids, j);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      res.labels[i] = best;
    }

    // Repair empty clusters with the point farthest from its centroid.
    std::vector<int64_t> counts(n_clusters, 0);
    for (Eigen::Index i = 0; i < n; ++i) counts[res.labels[i]]++;
    for (int j = 0; j < n_clusters; ++j) {
      if (counts[j] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[res.labels[i]] <= 1) continue;  // do not empty another cluster
        const double d = sq_dist(points, i, res.centroids, res.labels[i]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      require(far >= 0, "kmeans: cannot repair empty cluster");
      counts[res.labels[far]]--;
      res.labels[far] = j;
      counts[j] = 1;
      res.centroids.row(j) = points.row(far);
    }

    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      inertia += sq_dist(points, i, res.centroids, res.labels[i]);
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;

    if (res.labels == prev) break;
    prev = res.labels;

    // Update step.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_clusters, points.cols());
    std::vector<int64_t> sizes(n_clusters, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += points.row(i);
      sizes[res.labels[i]]++;
    }
    for (int j = 0; j < n_clusters; ++j)
      res.centroids.row(j) = sums.row(j) / static_cast<double>(sizes[j]);
  }
  return res;
}

}  // namespace detail

// Lloyd iterations from k-means++ seeding, best of `restarts` runs by final
// inertia (ties to the lower restart index). Restarts run in parallel on
// independent derived streams, so the winner does not depend on the worker
// count.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, int n_clusters, int restarts,
                           uint64_t seed, int max_iter = 300) {
  require(n_clusters >= 1, "kmeans: cluster count must be positive, got ", n_clusters);
  require(points.rows() >= n_clusters, "kmeans: n = ", points.rows(),
          " points cannot fill O = ", n_clusters, " clusters");
  require(restarts >= 1, "kmeans: restarts must be at least 1, got ", restarts);

  std::vector<KMeansResult> runs(restarts);
  parallel_for(static_cast<size_t>(restarts), [&](size_t r) {
    RngStream rng = derive_stream(seed, {detail::kKmeansTag, r});
    runs[r] = detail::kmeans_single(points, n_clusters, rng, max_iter);
  });
  size_t best = 0;
  for (size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  return std::move(runs[best]);
}

// Index of the centroid nearest to x (lowest index on ties).
inline int nearest_centroid(const Eigen::MatrixXd& centroids,
                            const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  int best = 0;
  double best_d = (centroids.row(0) - x).squaredNorm();
  for (Eigen::Index j = 1; j < centroids.rows(); ++j) {
    const double d = (centroids.row(j) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace mbnsep
