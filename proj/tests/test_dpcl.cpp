// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mbnsep/dpcl.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>

#include "support/oracles.hpp"

using namespace mbnsep;

TEST_CASE("indicator matrix picks the dominant speaker, ties to the lowest index") {
  Eigen::MatrixXd m1(1, 2), m2(1, 2);
  m1 << 0.9, 0.5;
  m2 << 0.3, 0.5;
  const IndicatorMatrix ind = indicator_matrix({m1, m2});
  REQUIRE(ind.speaker_count == 2);
  REQUIRE(ind.labels == std::vector<int32_t>{0, 0});  // 0.9 wins; the 0.5 tie goes low

  REQUIRE_THROWS_AS(indicator_matrix({}), Error);
  REQUIRE_THROWS_AS(indicator_matrix({m1}), Error);
}

TEST_CASE("indicator rows are one-hot by construction") {
  auto [X, B] = oracles::random_instance(50, 4, 3, 99);
  const auto counts = B.class_counts();
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  REQUIRE(total == 50);
}

TEST_CASE("objective vanishes when X equals the indicator matrix") {
  IndicatorMatrix B;
  B.speaker_count = 2;
  B.labels = {0, 1, 1, 0};
  EmbeddingMatrix X;
  X.data = Eigen::MatrixXd::Zero(4, 2);
  for (size_t i = 0; i < B.labels.size(); ++i) X.data(static_cast<Eigen::Index>(i), B.labels[i]) = 1.0;
  REQUIRE(dpcl_objective(X, B) == 0.0);
  REQUIRE(dpcl_objective_grad(X, B).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("hand-computed 2x1 instance gives J = 1") {
  // X = [1; 0], B = I2: XX^T = [[1,0],[0,0]], BB^T = I, difference norm^2 = 1
  EmbeddingMatrix X;
  X.data.resize(2, 1);
  X.data << 1.0, 0.0;
  IndicatorMatrix B;
  B.speaker_count = 2;
  B.labels = {0, 1};
  REQUIRE(dpcl_objective(X, B) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("expansion form matches the direct n x n evaluation") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const Eigen::Index n = 20 + static_cast<Eigen::Index>(seed) * 36;  // up to 200
    auto [X, B] = oracles::random_instance(n, 10, seed % 2 ? 3 : 2, seed);
    const double expansion = dpcl_objective(X, B);
    const double direct = oracles::dpcl_objective_direct(X, B);
    REQUIRE(expansion == Catch::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("row-count mismatch is rejected") {
  auto [X, B] = oracles::random_instance(10, 4, 2, 1);
  B.labels.pop_back();
  REQUIRE_THROWS_AS(dpcl_objective(X, B), Error);
  REQUIRE_THROWS_AS(dpcl_objective_grad(X, B), Error);
}

TEST_CASE("analytic gradient matches central finite differences") {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    auto [X, B] = oracles::random_instance(50, 10, seed % 2 ? 3 : 2, 100 + seed);
    const Eigen::MatrixXd analytic = dpcl_objective_grad(X, B);
    const Eigen::MatrixXd fd = oracles::dpcl_grad_fd(X, B);
    const double rel = (analytic - fd).norm() / std::max(fd.norm(), 1e-12);
    REQUIRE(rel < 1e-4);
  }
}

TEST_CASE("gradient scales like the analytic cubic form") {
  auto [X, B] = oracles::random_instance(30, 6, 2, 7);
  EmbeddingMatrix Xs;
  const double c = 1.7;
  Xs.data = c * X.data;
  // grad(cX) = 4 c^3 XG - 4 c BB^T X = (c^3 - c) * 4XG + c * grad(X)
  const Eigen::MatrixXd four_xg = 4.0 * X.data * (X.data.transpose() * X.data);
  const Eigen::MatrixXd expected = (c * c * c - c) * four_xg + c * dpcl_objective_grad(X, B);
  const Eigen::MatrixXd actual = dpcl_objective_grad(Xs, B);
  REQUIRE((actual - expected).norm() / expected.norm() < 1e-10);
  // and it still matches the finite-difference oracle at the scaled point
  const Eigen::MatrixXd fd = oracles::dpcl_grad_fd(Xs, B);
  REQUIRE((actual - fd).norm() / fd.norm() < 1e-4);
}

TEST_CASE("objective is invariant to orthogonal transforms of the embedding") {
  auto [X, B] = oracles::random_instance(60, 8, 2, 11);
  const double base = dpcl_objective(X, B);
  for (uint64_t seed = 0; seed < 3; ++seed) {
    EmbeddingMatrix Xr;
    Xr.data = X.data * oracles::random_orthogonal(8, 200 + seed);
    REQUIRE(dpcl_objective(Xr, B) == Catch::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("objective is invariant to speaker relabeling") {
  auto [X, B] = oracles::random_instance(40, 6, 3, 13);
  IndicatorMatrix Bp;
  Bp.speaker_count = 3;
  const int perm[3] = {2, 0, 1};
  for (int32_t l : B.labels) Bp.labels.push_back(perm[l]);
  REQUIRE(dpcl_objective(X, B) == Catch::Approx(dpcl_objective(X, Bp)).epsilon(1e-12));
}

TEST_CASE("J = 0 whenever rows are identical within speakers and orthonormal across") {
  IndicatorMatrix B;
  B.speaker_count = 3;
  B.labels = {0, 1, 2, 1, 0, 2, 2, 1};
  const OracleEmbedder embedder(B, 0.0, 7, 42);
  const EmbeddingMatrix X = embedder.embed_rows();
  REQUIRE(dpcl_objective(X, B) < 1e-9);
  REQUIRE(dpcl_objective_grad(X, B).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("oracle embedder: sigma 0 gives identical same-speaker rows, orthogonal classes") {
  IndicatorMatrix B;
  B.speaker_count = 2;
  B.labels = {0, 1, 0, 1, 1, 0};
  const OracleEmbedder embedder(B, 0.0, 5, 9);
  const EmbeddingMatrix X = embedder.embed_rows();
  validate_embeddings(X);
  REQUIRE((X.data.row(0) - X.data.row(2)).norm() == 0.0);
  REQUIRE((X.data.row(1) - X.data.row(4)).norm() == 0.0);
  REQUIRE(std::abs(X.data.row(0).dot(X.data.row(1))) < 1e-6);
}

TEST_CASE("oracle embedder rows stay unit-norm for any sigma") {
  IndicatorMatrix B;
  B.speaker_count = 3;
  B.labels.assign(200, 0);
  for (size_t i = 0; i < B.labels.size(); ++i) B.labels[i] = static_cast<int32_t>(i % 3);
  for (double sigma : {0.0, 0.3, 2.0}) {
    const OracleEmbedder embedder(B, sigma, 12, 77);
    validate_embeddings(embedder.embed_rows());
  }
}

TEST_CASE("oracle embedder rejects D below the speaker count") {
  IndicatorMatrix B;
  B.speaker_count = 4;
  B.labels = {0, 1, 2, 3};
  REQUIRE_THROWS_AS(OracleEmbedder(B, 0.0, 3, 1), Error);
}

TEST_CASE("embeddings round-trip bit-exactly through tensor files") {
  auto [X, B] = oracles::random_instance(37, 11, 2, 5);
  // float32 payload: store the rounded matrix so the round trip is exact
  X.data = X.data.cast<float>().cast<double>();
  const std::string path = "/tmp/mbnsep_test_emb.mbnt";
  save_embeddings(X, path);
  const EmbeddingMatrix back = load_embeddings(path);
  REQUIRE(back.rows() == 37);
  REQUIRE(back.dim() == 11);
  REQUIRE((back.data - X.data).cwiseAbs().maxCoeff() == 0.0);

  const std::string again = "/tmp/mbnsep_test_emb2.mbnt";
  save_embeddings(back, again);
  REQUIRE(read_file(path) == read_file(again));
}

TEST_CASE("embedding loader rejects bad files with pointed messages") {
  const std::string path = "/tmp/mbnsep_test_emb_bad.mbnt";
  atomic_write_file(path, "XXXX not a tensor");
  REQUIRE_THROWS_WITH(load_embeddings(path), Catch::Matchers::ContainsSubstring("magic"));

  Tensor t;
  t.dims = {2, 3, 4};
  t.data.assign(24, 0.0f);
  save_tensor(path, t);
  REQUIRE_THROWS_WITH(load_embeddings(path), Catch::Matchers::ContainsSubstring("rank 3"));
}
