// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mbnsep/util.hpp"

namespace mbnsep {

constexpr double kSiSdrClampDb = 100.0;
constexpr int kMaxPermSpeakers = 5;

// Scale-invariant SDR: the estimate is projected onto the reference to split
// it into a target component and a residual; the ratio is clamped to
// [-100, 100] dB so perfect and hopeless estimates stay finite.
inline double si_sdr(const std::vector<double>& est, const std::vector<double>& ref) {
  require(est.size() == ref.size(), "si_sdr: lengths differ (", est.size(), " vs ",
          ref.size(), ")");
  require(!est.empty(), "si_sdr: empty signals");
  double ref_energy = 0.0, dot = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += ref[i] * ref[i];
    dot += est[i] * ref[i];
  }
  require(ref_energy > 0.0, "si_sdr: all-zero reference");
  const double alpha = dot / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  double residual_energy = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    const double r = est[i] - alpha * ref[i];
    residual_energy += r * r;
  }
  if (target_energy <= 0.0) return -kSiSdrClampDb;
  if (residual_energy <= 0.0) return kSiSdrClampDb;
  const double db = 10.0 * std::log10(target_energy / residual_energy);
  return std::clamp(db, -kSiSdrClampDb, kSiSdrClampDb);
}

struct EvalReport {
  std::vector<double> per_speaker_si_sdr;  // indexed by reference
  std::vector<int> best_permutation;       // reference o <- estimate best_permutation[o]
  double mean_si_sdr = 0.0;
  double mixture_si_sdr = 0.0;  // mean of mixture scored against each reference
  double si_sdr_improvement = 0.0;
  double mask_accuracy = std::numeric_limits<double>::quiet_NaN();
  double nmi = std::numeric_limits<double>::quiet_NaN();
};

// Exhaustive assignment search (O <= 5) maximizing the mean SI-SDR; the
// improvement is measured against scoring the mixture itself as every
// estimate.
inline EvalReport permutation_invariant_eval(const std::vector<std::vector<double>>& ests,
                                             const std::vector<std::vector<double>>& refs,
                                             const std::vector<double>& mixture) {
  const size_t n_spk = refs.size();
  require(n_spk >= 1, "eval: no references");
  require(ests.size() == n_spk, "eval: got ", ests.size(), " estimates for ", n_spk,
          " references");
  require(n_spk <= kMaxPermSpeakers, "eval: exhaustive permutation search supports up to ",
          kMaxPermSpeakers, " speakers, got ", n_spk);

  // SI-SDR of every (estimate, reference) pair.
  std::vector<std::vector<double>> pair_sdr(n_spk, std::vector<double>(n_spk));
  for (size_t e = 0; e < n_spk; ++e)
    for (size_t r = 0; r < n_spk; ++r) pair_sdr[e][r] = si_sdr(ests[e], refs[r]);

  std::vector<int> perm(n_spk);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm = perm;
  double best_mean = -std::numeric_limits<double>::infinity();
  do {
    double mean = 0.0;
    for (size_t r = 0; r < n_spk; ++r) mean += pair_sdr[perm[r]][r];
    mean /= static_cast<double>(n_spk);
    if (mean > best_mean) {
      best_mean = mean;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  EvalReport report;
  report.best_permutation = best_perm;
  report.per_speaker_si_sdr.resize(n_spk);
  for (size_t r = 0; r < n_spk; ++r)
    report.per_speaker_si_sdr[r] = pair_sdr[best_perm[r]][r];
  report.mean_si_sdr = best_mean;
  double base = 0.0;
  for (size_t r = 0; r < n_spk; ++r) base += si_sdr(mixture, refs[r]);
  report.mixture_si_sdr = base / static_cast<double>(n_spk);
  report.si_sdr_improvement = report.mean_si_sdr - report.mixture_si_sdr;
  return report;
}

// Fraction of matching labels, maximized over label permutations (O <= 5).
inline double clustering_accuracy(const std::vector<int32_t>& pred,
                                  const std::vector<int32_t>& truth, int n_classes) {
  require(pred.size() == truth.size(), "clustering_accuracy: lengths differ");
  require(!pred.empty(), "clustering_accuracy: empty labelings");
  require(n_classes >= 1 && n_classes <= kMaxPermSpeakers,
          "clustering_accuracy: exhaustive search supports up to ", kMaxPermSpeakers,
          " classes, got ", n_classes);
  std::vector<std::vector<int64_t>> confusion(n_classes, std::vector<int64_t>(n_classes, 0));
  for (size_t i = 0; i < pred.size(); ++i) {
    require(pred[i] >= 0 && pred[i] < n_classes, "clustering_accuracy: predicted label ",
            pred[i], " out of range");
    require(truth[i] >= 0 && truth[i] < n_classes, "clustering_accuracy: true label ",
            truth[i], " out of range");
    confusion[pred[i]][truth[i]]++;
  }
  std::vector<int> perm(n_classes);
  std::iota(perm.begin(), perm.end(), 0);
  int64_t best = 0;
  do {
    int64_t hits = 0;
    for (int p = 0; p < n_classes; ++p) hits += confusion[p][perm[p]];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

// Normalized mutual information with natural-log entropies and the square
// root normalization: I(P;T) / sqrt(H(P) H(T)). Two constant labelings are
// identical partitions and score 1; a constant against a varying one scores 0.
inline double nmi(const std::vector<int32_t>& pred, const std::vector<int32_t>& truth) {
  require(pred.size() == truth.size(), "nmi: lengths differ");
  require(!pred.empty(), "nmi: empty labelings");
  const int np = *std::max_element(pred.begin(), pred.end()) + 1;
  const int nt = *std::max_element(truth.begin(), truth.end()) + 1;
  const double n = static_cast<double>(pred.size());
  std::vector<std::vector<int64_t>> joint(np, std::vector<int64_t>(nt, 0));
  std::vector<int64_t> cp(np, 0), ct(nt, 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    require(pred[i] >= 0 && truth[i] >= 0, "nmi: labels must be nonnegative");
    joint[pred[i]][truth[i]]++;
    cp[pred[i]]++;
    ct[truth[i]]++;
  }
  double hp = 0.0, ht = 0.0, mi = 0.0;
  for (int p = 0; p < np; ++p)
    if (cp[p] > 0) hp -= cp[p] / n * std::log(cp[p] / n);
  for (int t = 0; t < nt; ++t)
    if (ct[t] > 0) ht -= ct[t] / n * std::log(ct[t] / n);
  for (int p = 0; p < np; ++p)
    for (int t = 0; t < nt; ++t)
      if (joint[p][t] > 0)
        mi += joint[p][t] / n *
              std::log(joint[p][t] * n / (static_cast<double>(cp[p]) * ct[t]));
  if (hp == 0.0 && ht == 0.0) return 1.0;
  if (hp == 0.0 || ht == 0.0) return 0.0;
  return std::clamp(mi / std::sqrt(hp * ht), 0.0, 1.0);
}

// CSV / text emission; formatting is fixed so identical runs produce
// byte-identical reports.
namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

inline std::string eval_report_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  require(!rows.empty(), "eval_report_csv: no rows");
  const size_t n_spk = rows.front().second.per_speaker_si_sdr.size();
  std::string out = "id";
  for (size_t o = 1; o <= n_spk; ++o) out += detail::str(",si_sdr_", o);
  for (size_t o = 1; o <= n_spk; ++o) out += detail::str(",est_for_ref_", o);
  out += ",mean_si_sdr,mixture_si_sdr,si_sdr_improvement,mask_accuracy,nmi\n";
  for (const auto& [id, r] : rows) {
    require(r.per_speaker_si_sdr.size() == n_spk, "eval_report_csv: speaker counts differ");
    out += id;
    for (double v : r.per_speaker_si_sdr) out += "," + detail::fixed6(v);
    for (int p : r.best_permutation) out += detail::str(",", p);
    out += "," + detail::fixed6(r.mean_si_sdr);
    out += "," + detail::fixed6(r.mixture_si_sdr);
    out += "," + detail::fixed6(r.si_sdr_improvement);
    out += "," + (std::isnan(r.mask_accuracy) ? std::string() : detail::fixed6(r.mask_accuracy));
    out += "," + (std::isnan(r.nmi) ? std::string() : detail::fixed6(r.nmi));
    out += "\n";
  }
  return out;
}

inline std::string eval_report_text(const std::string& id, const EvalReport& r) {
  std::string out = detail::str("mixture ", id, "\n");
  for (size_t o = 0; o < r.per_speaker_si_sdr.size(); ++o)
    out += detail::str("  ref ", o + 1, ": est ", r.best_permutation[o] + 1, ", si-sdr ",
                       detail::fixed6(r.per_speaker_si_sdr[o]), " dB\n");
  out += detail::str("  mean si-sdr      ", detail::fixed6(r.mean_si_sdr), " dB\n");
  out += detail::str("  mixture si-sdr   ", detail::fixed6(r.mixture_si_sdr), " dB\n");
  out += detail::str("  improvement      ", detail::fixed6(r.si_sdr_improvement), " dB\n");
  if (!std::isnan(r.mask_accuracy))
    out += detail::str("  mask accuracy    ", detail::fixed6(r.mask_accuracy), "\n");
  if (!std::isnan(r.nmi))
    out += detail::str("  nmi              ", detail::fixed6(r.nmi), "\n");
  return out;
}

}  // namespace mbnsep
