// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mbnsep/metrics.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "mbnsep/rng.hpp"

using namespace mbnsep;

namespace {

std::vector<double> noise(size_t n, uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> w(n);
  for (auto& v : w) v = rng.normal();
  return w;
}

}  // namespace

TEST_CASE("si-sdr of a perfect or rescaled estimate clamps to 100 dB") {
  const auto ref = noise(400, 1);
  REQUIRE(si_sdr(ref, ref) == 100.0);
  std::vector<double> twice = ref;
  for (double& v : twice) v *= 2.0;
  REQUIRE(si_sdr(twice, ref) == 100.0);
}

TEST_CASE("orthogonal noise of equal power scores 0 dB") {
  const size_t n = 1024;
  std::vector<double> ref(n), noise_part(n);
  for (size_t i = 0; i < n; ++i) {
    ref[i] = std::sin(2.0 * std::numbers::pi * 8.0 * i / n);
    noise_part[i] = std::cos(2.0 * std::numbers::pi * 8.0 * i / n);  // orthogonal, equal power
  }
  std::vector<double> est(n);
  for (size_t i = 0; i < n; ++i) est[i] = ref[i] + noise_part[i];
  REQUIRE(std::abs(si_sdr(est, ref)) < 1e-9);
}

TEST_CASE("si-sdr is scale invariant and rejects a zero reference") {
  const auto ref = noise(300, 2);
  const auto est = noise(300, 3);
  const double base = si_sdr(est, ref);
  for (double c : {0.125, 0.7, 4.0, 1234.5}) {
    std::vector<double> scaled = est;
    for (double& v : scaled) v *= c;
    REQUIRE(std::abs(si_sdr(scaled, ref) - base) < 1e-9);
  }
  std::vector<double> flipped = est;
  for (double& v : flipped) v = -v;
  REQUIRE(std::abs(si_sdr(flipped, ref) - base) < 1e-9);

  const std::vector<double> zeros(300, 0.0);
  REQUIRE_THROWS_AS(si_sdr(est, zeros), Error);
  REQUIRE(si_sdr(zeros, ref) == -100.0);
}

TEST_CASE("permutation search finds the swapped assignment") {
  const auto a = noise(500, 4);
  const auto b = noise(500, 5);
  std::vector<double> mixture(500);
  for (size_t i = 0; i < 500; ++i) mixture[i] = a[i] + b[i];
  const EvalReport rep = permutation_invariant_eval({b, a}, {a, b}, mixture);
  REQUIRE(rep.best_permutation == std::vector<int>{1, 0});
  REQUIRE(rep.mean_si_sdr == 100.0);
  REQUIRE(rep.per_speaker_si_sdr[0] == 100.0);
}

TEST_CASE("O=2 search equals brute force over both assignments") {
  const auto r1 = noise(300, 6);
  const auto r2 = noise(300, 7);
  const auto e1 = noise(300, 8);
  const auto e2 = noise(300, 9);
  std::vector<double> mixture(300);
  for (size_t i = 0; i < 300; ++i) mixture[i] = r1[i] + r2[i];
  const EvalReport rep = permutation_invariant_eval({e1, e2}, {r1, r2}, mixture);
  const double identity = 0.5 * (si_sdr(e1, r1) + si_sdr(e2, r2));
  const double swapped = 0.5 * (si_sdr(e2, r1) + si_sdr(e1, r2));
  REQUIRE(rep.mean_si_sdr == Catch::Approx(std::max(identity, swapped)).margin(1e-12));
  REQUIRE(rep.mean_si_sdr >= identity);  // beats or ties the identity assignment
}

TEST_CASE("mixture as every estimate scores zero improvement") {
  const auto r1 = noise(400, 10);
  const auto r2 = noise(400, 11);
  std::vector<double> mixture(400);
  for (size_t i = 0; i < 400; ++i) mixture[i] = r1[i] + r2[i];
  const EvalReport rep = permutation_invariant_eval({mixture, mixture}, {r1, r2}, mixture);
  REQUIRE(std::abs(rep.si_sdr_improvement) < 1e-9);
}

TEST_CASE("more than five speakers are rejected") {
  std::vector<std::vector<double>> six(6, noise(50, 12));
  REQUIRE_THROWS_AS(permutation_invariant_eval(six, six, six[0]), Error);
}

TEST_CASE("clustering accuracy is permutation invariant") {
  const std::vector<int32_t> truth = {0, 0, 1, 1, 2, 2, 0, 1, 2};
  REQUIRE(clustering_accuracy(truth, truth, 3) == 1.0);
  std::vector<int32_t> permuted;
  const int perm[3] = {2, 0, 1};
  for (int32_t l : truth) permuted.push_back(perm[l]);
  REQUIRE(clustering_accuracy(permuted, truth, 3) == 1.0);

  std::vector<int32_t> one_off = permuted;
  one_off[0] = 1;
  REQUIRE(clustering_accuracy(one_off, truth, 3) ==
          Catch::Approx(8.0 / 9.0).margin(1e-12));
}

TEST_CASE("accuracy is at least 1/O against balanced truth") {
  RngStream rng(13);
  const int n_classes = 3;
  std::vector<int32_t> truth(300);
  for (size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int32_t>(i % n_classes);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int32_t> pred(truth.size());
    for (auto& l : pred) l = static_cast<int32_t>(rng.below(n_classes));
    REQUIRE(clustering_accuracy(pred, truth, n_classes) >= 1.0 / n_classes);
  }
}

TEST_CASE("nmi hits 1 on identical partitions and stays tiny on independent ones") {
  const std::vector<int32_t> truth = {0, 1, 0, 1, 1, 0, 0, 1};
  REQUIRE(nmi(truth, truth) == 1.0);
  std::vector<int32_t> flipped;
  for (int32_t l : truth) flipped.push_back(1 - l);
  REQUIRE(nmi(flipped, truth) == 1.0);

  for (uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(40 + seed);
    std::vector<int32_t> a(10000), b(10000);
    for (size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<int32_t>(rng.below(2));
      b[i] = static_cast<int32_t>(rng.below(2));
    }
    REQUIRE(nmi(a, b) < 0.01);
  }
}

TEST_CASE("nmi conventions for constant labelings") {
  const std::vector<int32_t> constant(20, 0);
  std::vector<int32_t> varying(20);
  for (size_t i = 0; i < varying.size(); ++i) varying[i] = static_cast<int32_t>(i % 2);
  REQUIRE(nmi(constant, constant) == 1.0);
  REQUIRE(nmi(constant, varying) == 0.0);
}

TEST_CASE("csv report is stable and carries the optional fields") {
  EvalReport r;
  r.per_speaker_si_sdr = {10.5, 8.25};
  r.best_permutation = {1, 0};
  r.mean_si_sdr = 9.375;
  r.mixture_si_sdr = 1.0;
  r.si_sdr_improvement = 8.375;
  const std::string csv1 = eval_report_csv({{"m1", r}});
  REQUIRE(csv1.find("id,si_sdr_1,si_sdr_2,est_for_ref_1,est_for_ref_2,") == 0);
  REQUIRE(csv1.find("m1,10.500000,8.250000,1,0,9.375000,1.000000,8.375000,,") != std::string::npos);

  r.mask_accuracy = 0.875;
  r.nmi = 0.5;
  const std::string csv2 = eval_report_csv({{"m1", r}});
  REQUIRE(csv2.find("0.875000,0.500000") != std::string::npos);
  REQUIRE(eval_report_csv({{"m1", r}}) == csv2);
}
