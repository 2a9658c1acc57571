// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mbnsep/features.hpp"
#include "mbnsep/rng.hpp"
#include "mbnsep/tensor_io.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

// Ground-truth speaker dominance per T-F unit. Rows are one-hot, so the
// matrix is stored as a label vector.
struct IndicatorMatrix {
  std::vector<int32_t> labels;
  int speaker_count = 0;

  size_t rows() const { return labels.size(); }

  std::vector<int64_t> class_counts() const {
    std::vector<int64_t> counts(speaker_count, 0);
    for (int32_t l : labels) counts[l]++;
    return counts;
  }
};

struct EmbeddingMatrix {
  Eigen::MatrixXd data;  // n x D, rows unit-norm

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

// Embedder contract: rows of the unit-norm n x D output line up with the
// feature tensor's flat unit index. The trained network that produces
// embeddings in production plugs in behind this interface.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingMatrix embed(const FeatureTensor& features) const = 0;
};

inline void validate_embeddings(const EmbeddingMatrix& emb, double tol = 1e-6) {
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    const double norm = emb.data.row(i).norm();
    require(std::isfinite(norm) && std::abs(norm - 1.0) <= tol,
            "embedding row ", i, " is not unit-norm (|x| = ", norm, ")");
  }
}

// Speaker with maximum magnitude wins each unit; ties go to the lowest index.
inline IndicatorMatrix indicator_matrix(const std::vector<Eigen::MatrixXd>& source_mags) {
  require(!source_mags.empty(), "indicator_matrix: empty source list");
  require(source_mags.size() >= 2, "indicator_matrix: need at least 2 sources, got ",
          source_mags.size());
  const Eigen::Index frames = source_mags[0].rows();
  const Eigen::Index bins = source_mags[0].cols();
  for (const auto& m : source_mags)
    require(m.rows() == frames && m.cols() == bins,
            "indicator_matrix: source magnitude shapes differ");

  IndicatorMatrix ind;
  ind.speaker_count = static_cast<int>(source_mags.size());
  ind.labels.resize(static_cast<size_t>(frames * bins));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index f = 0; f < bins; ++f) {
      int best = 0;
      double best_mag = source_mags[0](t, f);
      for (int u = 1; u < ind.speaker_count; ++u) {
        if (source_mags[u](t, f) > best_mag) {
          best_mag = source_mags[u](t, f);
          best = u;
        }
      }
      ind.labels[static_cast<size_t>(t * bins + f)] = best;
    }
  }
  return ind;
}

namespace detail {

// B^T X as a U x D matrix (per-class row sums of X).
inline Eigen::MatrixXd class_sums(const EmbeddingMatrix& X, const IndicatorMatrix& B) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(B.speaker_count, X.dim());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    s.row(B.labels[static_cast<size_t>(i)]) += X.data.row(i);
  return s;
}

}  // namespace detail

// Affinity cost J = ||XX^T - BB^T||_F^2, evaluated through the expansion
// ||X^T X||_F^2 - 2 ||X^T B||_F^2 + ||B^T B||_F^2 so no n x n matrix is
// ever formed (n is ~1e5 per utterance).
inline double dpcl_objective(const EmbeddingMatrix& X, const IndicatorMatrix& B) {
  require(static_cast<size_t>(X.rows()) == B.rows(),
          "dpcl_objective: X has ", X.rows(), " rows but B has ", B.rows());
  const Eigen::MatrixXd gram = X.data.transpose() * X.data;  // D x D
  const Eigen::MatrixXd cross = detail::class_sums(X, B);    // U x D
  double btb = 0.0;
  for (int64_t c : B.class_counts()) btb += static_cast<double>(c) * static_cast<double>(c);
  const double j = gram.squaredNorm() - 2.0 * cross.squaredNorm() + btb;
  return std::max(j, 0.0);
}

// Gradient of the cost above: 4 (XX^T - BB^T) X, again via small factors.
inline Eigen::MatrixXd dpcl_objective_grad(const EmbeddingMatrix& X, const IndicatorMatrix& B) {
  require(static_cast<size_t>(X.rows()) == B.rows(),
          "dpcl_objective_grad: X has ", X.rows(), " rows but B has ", B.rows());
  const Eigen::MatrixXd gram = X.data.transpose() * X.data;  // D x D
  const Eigen::MatrixXd cross = detail::class_sums(X, B);    // U x D
  Eigen::MatrixXd grad = 4.0 * (X.data * gram);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    grad.row(i) -= 4.0 * cross.row(B.labels[static_cast<size_t>(i)]);
  return grad;
}

// Stand-in for the trained embedder: a fixed seeded orthonormal U -> D map
// applied to each one-hot row plus isotropic Gaussian noise, re-normalized.
// With sigma = 0 the embedding is the ideal speaker geometry itself.
class OracleEmbedder : public Embedder {
 public:
  OracleEmbedder(IndicatorMatrix truth, double noise_sigma, int dim, uint64_t seed)
      : truth_(std::move(truth)), sigma_(noise_sigma), dim_(dim), seed_(seed) {
    require(sigma_ >= 0.0, "oracle embedder: sigma must be nonnegative, got ", sigma_);
    require(dim_ >= truth_.speaker_count, "oracle embedder: D = ", dim_,
            " is smaller than the speaker count U = ", truth_.speaker_count);
    RngStream rng = derive_stream(seed_, {0x6f7261636c65ULL, 0});
    Eigen::MatrixXd g(dim_, truth_.speaker_count);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    map_ = q.leftCols(truth_.speaker_count);
    for (Eigen::Index c = 0; c < map_.cols(); ++c) {
      Eigen::Index imax = 0;
      map_.col(c).cwiseAbs().maxCoeff(&imax);
      if (map_(imax, c) < 0) map_.col(c) = -map_.col(c);
    }
  }

  EmbeddingMatrix embed(const FeatureTensor& features) const override {
    require(static_cast<size_t>(features.units()) == truth_.rows(),
            "oracle embedder: feature tensor has ", features.units(),
            " units but the indicator matrix has ", truth_.rows(), " rows");
    return embed_rows();
  }

  // Embeds straight from the indicator rows (no feature tensor needed).
  EmbeddingMatrix embed_rows() const {
    RngStream noise = derive_stream(seed_, {0x6f7261636c65ULL, 1});
    EmbeddingMatrix emb;
    emb.data.resize(static_cast<Eigen::Index>(truth_.rows()), dim_);
    for (size_t i = 0; i < truth_.rows(); ++i) {
      Eigen::VectorXd x = map_.col(truth_.labels[i]);
      if (sigma_ > 0.0)
        for (int d = 0; d < dim_; ++d) x[d] += sigma_ * noise.normal();
      const double norm = x.norm();
      if (norm > 1e-12)
        x /= norm;
      else
        x = map_.col(truth_.labels[i]);
      emb.data.row(static_cast<Eigen::Index>(i)) = x.transpose();
    }
    return emb;
  }

  const Eigen::MatrixXd& map() const { return map_; }

 private:
  IndicatorMatrix truth_;
  double sigma_;
  int dim_;
  uint64_t seed_;
  Eigen::MatrixXd map_;
};

// Embeddings produced offline (e.g. by a neural front end) enter through
// rank-2 MBNT tensor files.
inline void save_embeddings(const EmbeddingMatrix& emb, const std::string& path) {
  save_tensor(path, tensor_from_matrix(emb.data));
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  const Tensor t = load_tensor(path);
  EmbeddingMatrix emb;
  emb.data = matrix_from_tensor(t, path);
  return emb;
}

class FileEmbedder : public Embedder {
 public:
  explicit FileEmbedder(const std::string& path) : emb_(load_embeddings(path)), path_(path) {}

  EmbeddingMatrix embed(const FeatureTensor& features) const override {
    require(features.units() == emb_.rows(), path_, ": embeddings have ", emb_.rows(),
            " rows but the feature tensor has ", features.units(), " units");
    return emb_;
  }

 private:
  EmbeddingMatrix emb_;
  std::string path_;
};

}  // namespace mbnsep
