// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance suite: one line per criterion, nonzero exit if any fail.
// Criteria 4-6 run twice at different worker counts; criterion 7 compares
// the two serialized result blobs byte for byte.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "mbnsep/mbnsep.hpp"
#include "support/oracles.hpp"
#include "support/sources.hpp"

using namespace mbnsep;

namespace {

int g_failures = 0;

void criterion(int num, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", num, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- criterion 1: STFT round-trip -------------------------------------------

void run_criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    RngStream rng(1000 + seed);
    std::vector<double> wave(8000);
    for (auto& v : wave) v = rng.normal();
    const std::vector<double> rec = istft(stft(wave));
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < wave.size(); ++i) {
      num += (rec[i] - wave[i]) * (rec[i] - wave[i]);
      den += wave[i] * wave[i];
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  const double elapsed = seconds_since(t0);
  criterion(1, "stft round-trip < 1e-6 on 20 random 1 s signals, < 5 s",
            worst < 1e-6 && elapsed < 5.0,
            "max rel rms " + fmt_sci(worst) + ", " + fmt(elapsed) + " s");
}

// --- criterion 2: DPCL gradient and expansion -------------------------------

void run_criterion_2() {
  double worst_grad = 0.0;
  for (uint64_t i = 0; i < 20; ++i) {
    auto [X, B] = oracles::random_instance(50, 10, i % 2 ? 3 : 2, 2000 + i);
    const Eigen::MatrixXd analytic = dpcl_objective_grad(X, B);
    const Eigen::MatrixXd fd = oracles::dpcl_grad_fd(X, B, 1e-5);
    worst_grad = std::max(worst_grad, (analytic - fd).norm() / fd.norm());
  }
  double worst_obj = 0.0;
  for (uint64_t i = 0; i < 8; ++i) {
    const Eigen::Index n = 20 + static_cast<Eigen::Index>(i) * 25;  // 20..195
    auto [X, B] = oracles::random_instance(n, 10, i % 2 ? 3 : 2, 3000 + i);
    const double expansion = dpcl_objective(X, B);
    const double direct = oracles::dpcl_objective_direct(X, B);
    worst_obj = std::max(worst_obj, std::abs(expansion - direct) / direct);
  }
  criterion(2, "dpcl gradient vs finite differences 1e-4; expansion vs direct 1e-9",
            worst_grad < 1e-4 && worst_obj < 1e-9,
            "grad rel err " + fmt_sci(worst_grad) + ", objective rel err " +
                fmt_sci(worst_obj));
}

// --- criterion 3: schedule boundary -----------------------------------------

void run_criterion_3() {
  bool ok = true;
  std::string detail;
  for (double delta : {0.0, 0.05, 0.1, 0.15}) {
    const size_t layers = plan_k_schedule(20, delta, 2).size();
    ok = ok && layers == 1;
    detail += "d" + fmt(delta).substr(0, 4) + ":L" + std::to_string(layers) + " ";
  }
  for (double delta : {0.2, 0.3, 0.5, 0.7}) {
    const size_t layers = plan_k_schedule(20, delta, 2).size();
    ok = ok && layers >= 2;
    detail += "d" + fmt(delta).substr(0, 4) + ":L" + std::to_string(layers) + " ";
  }
  criterion(3, "k-schedule shallow/deep boundary at delta = 0.15 (k1=20, O=2)", ok, detail);
}

// --- shared scene set for criteria 4-6 --------------------------------------

struct Scene {
  Mixture mixture;
  Spectrogram mix_spec;
  FeatureTensor features;
  IndicatorMatrix truth;
  std::vector<std::vector<double>> refs;  // channel-1 images
};

Scene make_scene(uint64_t seed, double t60) {
  auto [a, b] = testsources::source_pair(4800, 8000.0, seed);
  MixSpec spec;
  spec.id = "scene" + std::to_string(seed);
  spec.sources = {"a", "b"};
  spec.delays = {0, 4};
  spec.sir_db = 3.0;
  spec.t60 = t60;
  spec.seed = seed;
  Scene scene;
  scene.mixture = mix(spec, {a, b});
  scene.mix_spec = stft(scene.mixture.channels[0]);
  scene.features = assemble_features(scene.mix_spec, stft(scene.mixture.channels[1]));
  scene.truth = indicator_matrix({magnitude(stft(scene.mixture.images[0][0])),
                                  magnitude(stft(scene.mixture.images[1][0]))});
  scene.refs = {scene.mixture.images[0][0], scene.mixture.images[1][0]};
  return scene;
}

MbnConfig paper_mbn(uint64_t seed) {
  MbnConfig cfg;
  cfg.V = 400;
  cfg.a = 0.9;
  cfg.k1 = 20;
  cfg.delta = 0.0;
  cfg.n_classes = 2;
  cfg.output_dim = 2;
  cfg.seed = seed;
  return cfg;
}

struct HeavyResults {
  bool c4_pass = false, c5_pass = false, c6_pass = false;
  std::string c4_detail, c5_detail, c6_detail;
  std::string blob;  // serialized per-seed numbers for the determinism check
};

// Criterion 4: oracle embeddings of the clustered unit population of seeded
// mixtures (the units the pipeline's k-means actually sees), subsampled to
// n = 2000 per seed; k-means accuracy on m-vectors vs raw embeddings.
void run_criterion_4(HeavyResults& out) {
  std::vector<double> raw_acc, mbn_acc;
  double worst_seed_time = 0.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const Scene scene = make_scene(300 + seed, 0.0);
    const double threshold = scene.features.log_mag1.maxCoeff() - 2.0 * std::log(10.0);
    std::vector<uint32_t> retained;
    const Eigen::Index bins = scene.features.bins();
    for (size_t i = 0; i < scene.truth.labels.size(); ++i) {
      const Eigen::Index t = static_cast<Eigen::Index>(i) / bins;
      const Eigen::Index f = static_cast<Eigen::Index>(i) % bins;
      if (scene.features.log_mag1(t, f) > threshold) retained.push_back(static_cast<uint32_t>(i));
    }
    RngStream sub = derive_stream(seed, {0xc4, 1});
    const auto pick = sub.sample_without_replacement(retained.size(), 2000);
    IndicatorMatrix truth;
    truth.speaker_count = 2;
    for (uint32_t p : pick) truth.labels.push_back(scene.truth.labels[retained[p]]);

    const OracleEmbedder embedder(truth, 0.5, 40, derive_stream(seed, {0xc4, 2}).u64());
    const EmbeddingMatrix X = embedder.embed_rows();

    const KMeansResult raw = kmeans(X.data, 2, 10, derive_stream(seed, {0xc4, 3}).u64());
    raw_acc.push_back(clustering_accuracy(raw.labels, truth.labels, 2));

    const MbnModel model = fit(X.data, paper_mbn(derive_stream(seed, {0xc4, 4}).u64()));
    const Eigen::MatrixXd m = transform_batch(model, X.data);
    const KMeansResult km = kmeans(m, 2, 10, derive_stream(seed, {0xc4, 5}).u64());
    mbn_acc.push_back(clustering_accuracy(km.labels, truth.labels, 2));
    worst_seed_time = std::max(worst_seed_time, seconds_since(t0));
    out.blob += "c4 seed " + std::to_string(seed) + " raw " + fmt(raw_acc.back()) +
                " mbn " + fmt(mbn_acc.back()) + "\n";
  }
  const double med_raw = median(raw_acc);
  const double med_mbn = median(mbn_acc);
  out.c4_pass = med_mbn >= med_raw && med_mbn >= 0.9 && worst_seed_time < 60.0;
  out.c4_detail = "median m-vector acc " + fmt(med_mbn) + " vs raw " + fmt(med_raw) +
                  ", max " + fmt(worst_seed_time) + " s/seed";
}

// Criterion 5: ideal-binary-mask resynthesis on the 20-scene set.
void run_criterion_5(const std::vector<Scene>& scenes, HeavyResults& out) {
  double sum_improvement = 0.0;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    const MaskSet ibm = masks_from_labels(scene.truth.labels, scene.mix_spec.frames(),
                                          scene.mix_spec.bins(), 2);
    const auto waves = apply_masks_and_resynthesize(ibm, scene.mix_spec);
    const EvalReport rep = permutation_invariant_eval(waves, scene.refs,
                                                      scene.mixture.channels[0]);
    sum_improvement += rep.si_sdr_improvement;
    out.blob += "c5 scene " + std::to_string(i) + " improvement " +
                fmt(rep.si_sdr_improvement) + "\n";
  }
  const double mean_improvement = sum_improvement / static_cast<double>(scenes.size());
  out.c5_pass = mean_improvement >= 5.0;
  out.c5_detail = "mean ibm si-sdr improvement " + fmt(mean_improvement) + " dB over " +
                  std::to_string(scenes.size()) + " mixtures";
}

// Criterion 6: full separate+eval chain, oracle embedder sigma 0.3, with and
// without the MBN stage.
void run_criterion_6(const std::vector<Scene>& scenes, HeavyResults& out) {
  std::vector<double> improv_on, improv_off;
  bool all_positive = true;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    const uint64_t seed = derive_stream(0xc6, {i}).u64();
    const OracleEmbedder embedder(scene.truth, 0.3, 40, seed);

    SeparateOptions opts;
    opts.seed = seed;
    const SeparationResult on = separate(scene.features, embedder, paper_mbn(seed), 2, opts);
    const auto waves_on = apply_masks_and_resynthesize(on.masks, scene.mix_spec);
    const EvalReport rep_on = permutation_invariant_eval(waves_on, scene.refs,
                                                         scene.mixture.channels[0]);
    SeparateOptions opts_off = opts;
    opts_off.use_mbn = false;
    const SeparationResult off =
        separate(scene.features, embedder, paper_mbn(seed), 2, opts_off);
    const auto waves_off = apply_masks_and_resynthesize(off.masks, scene.mix_spec);
    const EvalReport rep_off = permutation_invariant_eval(waves_off, scene.refs,
                                                          scene.mixture.channels[0]);

    improv_on.push_back(rep_on.si_sdr_improvement);
    improv_off.push_back(rep_off.si_sdr_improvement);
    all_positive = all_positive && rep_on.si_sdr_improvement > 0.0;
    out.blob += "c6 scene " + std::to_string(i) + " on " + fmt(rep_on.si_sdr_improvement) +
                " off " + fmt(rep_off.si_sdr_improvement) + "\n";
  }
  const double med_on = median(improv_on);
  const double med_off = median(improv_off);
  out.c6_pass = all_positive && med_on >= med_off;
  out.c6_detail = "improvement > 0 on all: " + std::string(all_positive ? "yes" : "no") +
                  "; median on " + fmt(med_on) + " dB vs off " + fmt(med_off) + " dB";
}

HeavyResults run_heavy() {
  HeavyResults out;
  run_criterion_4(out);
  std::vector<Scene> scenes;
  for (uint64_t seed = 0; seed < 10; ++seed) scenes.push_back(make_scene(500 + seed, 0.0));
  for (uint64_t seed = 0; seed < 10; ++seed) scenes.push_back(make_scene(600 + seed, 0.3));
  run_criterion_5(scenes, out);
  run_criterion_6(scenes, out);
  return out;
}

// --- criterion 8: randomized property tests ---------------------------------

void run_criterion_8() {
  size_t cases = 0;
  bool ok = true;

  // masks partition the plane and round-trip
  {
    RngStream rng(0xa8);
    for (int trial = 0; trial < 100000 && ok; ++trial) {
      const Eigen::Index frames = 1 + static_cast<Eigen::Index>(rng.below(6));
      const Eigen::Index bins = 1 + static_cast<Eigen::Index>(rng.below(10));
      const int n_speakers = 2 + static_cast<int>(rng.below(4));
      std::vector<int32_t> labels(static_cast<size_t>(frames * bins));
      for (auto& l : labels) l = static_cast<int32_t>(rng.below(n_speakers));
      const MaskSet ms = masks_from_labels(labels, frames, bins, n_speakers);
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(frames, bins);
      for (const auto& m : ms.masks) sum += m;
      ok = ok && (sum.array() == 1.0).all() && labels_from_masks(ms) == labels;
      ++cases;
    }
  }

  // sparse codes carry exactly V in-block active units at every layer
  if (ok) {
    RngStream rng(0xb8);
    Eigen::MatrixXd data(60, 6);
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      for (Eigen::Index j = 0; j < data.cols(); ++j) data(i, j) = rng.normal();
    MbnConfig cfg;
    cfg.V = 8;
    cfg.a = 0.8;
    cfg.k1 = 10;
    cfg.delta = 0.55;  // two layers: 10, 5
    cfg.n_classes = 2;
    cfg.output_dim = 2;
    cfg.seed = 0xb8;
    const MbnModel model = fit(data, cfg);
    for (int trial = 0; trial < 100000 && ok; ++trial) {
      Eigen::RowVectorXd x(6);
      for (int j = 0; j < 6; ++j) x[j] = rng.normal() * 3.0;
      SparseCode code = encode_layer(model.layers[0], x);
      for (size_t l = 0; l < model.depth(); ++l) {
        if (l > 0) code = encode_layer(model.layers[l], code);
        const MbnLayer& layer = model.layers[l];
        ok = ok && code.active.size() == layer.V();
        for (uint32_t v = 0; v < layer.V() && ok; ++v)
          ok = code.active[v] >= v * layer.k && code.active[v] < (v + 1) * layer.k;
      }
      ++cases;
    }
  }

  // SI-SDR is invariant to positive rescaling of the estimate
  if (ok) {
    RngStream rng(0xc8);
    for (int trial = 0; trial < 100000 && ok; ++trial) {
      const size_t n = 16 + rng.below(128);
      std::vector<double> ref(n), est(n);
      for (auto& v : ref) v = rng.normal();
      for (size_t i = 0; i < n; ++i) est[i] = ref[i] + 0.5 * rng.normal();
      const double base = si_sdr(est, ref);
      const double c = std::exp((rng.real01() * 8.0) - 4.0);
      for (auto& v : est) v *= c;
      ok = ok && std::abs(si_sdr(est, ref) - base) <= 1e-9;
      ++cases;
    }
  }

  criterion(8, "mask partition, code mass, si-sdr scale invariance properties", ok,
            std::to_string(cases) + " randomized cases");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  run_criterion_1();
  run_criterion_2();
  run_criterion_3();

  const unsigned hw = std::max(2u, max_threads());
  set_max_threads(hw);
  const HeavyResults first = run_heavy();
  set_max_threads(1);
  const HeavyResults second = run_heavy();
  set_max_threads(hw);

  criterion(4, "mbn denoising: m-vector k-means vs raw embeddings (10 seeds)",
            first.c4_pass, first.c4_detail);
  criterion(5, "ideal-binary-mask resynthesis gains at least 5 dB si-sdr",
            first.c5_pass, first.c5_detail);
  criterion(6, "end-to-end oracle chain: positive improvement, mbn on >= off",
            first.c6_pass, first.c6_detail);
  criterion(7, "criteria 4-6 reports byte-identical across worker counts",
            first.blob == second.blob,
            std::to_string(first.blob.size()) + " report bytes at " +
                std::to_string(hw) + " vs 1 workers");
  run_criterion_8();

  std::printf("%s: %d criterion(s) failed, total %.1f s\n",
              g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", g_failures,
              seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
