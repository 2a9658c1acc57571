// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "mbnsep/signal.hpp"
#include "mbnsep/tensor_io.hpp"
#include "mbnsep/util.hpp"

namespace mbnsep {

constexpr double kMagnitudeFloor = 1e-8;

// Per T-F unit feature [log|y1|, log|y2|, cosIPD], stored as three
// frames x bins planes. The flat unit index is row-major over frames then
// bins (i = t*bins + f) everywhere in the pipeline.
struct FeatureTensor {
  Eigen::MatrixXd log_mag1;
  Eigen::MatrixXd log_mag2;
  Eigen::MatrixXd cos_ipd;

  Eigen::Index frames() const { return log_mag1.rows(); }
  Eigen::Index bins() const { return log_mag1.cols(); }
  Eigen::Index units() const { return frames() * bins(); }

  Eigen::Vector3d unit(Eigen::Index i) const {
    const Eigen::Index t = i / bins();
    const Eigen::Index f = i % bins();
    return {log_mag1(t, f), log_mag2(t, f), cos_ipd(t, f)};
  }

  // n x 3 view used by embedders.
  Eigen::MatrixXd as_matrix() const {
    Eigen::MatrixXd m(units(), 3);
    for (Eigen::Index i = 0; i < units(); ++i) m.row(i) = unit(i).transpose();
    return m;
  }
};

// Natural log of max(|y|, floor).
inline Eigen::MatrixXd log_magnitude(const Spectrogram& spec, double floor = kMagnitudeFloor) {
  require(floor > 0, "log_magnitude: floor must be positive, got ", floor);
  Eigen::MatrixXd out(spec.frames(), spec.bins());
  for (Eigen::Index t = 0; t < spec.frames(); ++t)
    for (Eigen::Index f = 0; f < spec.bins(); ++f)
      out(t, f) = std::log(std::max(std::abs(spec.data(t, f)), floor));
  return out;
}

// cos(angle(y1) - angle(y2)); units where either channel falls below the
// magnitude floor carry no phase evidence and yield 1.
inline Eigen::MatrixXd cos_ipd(const Spectrogram& spec1, const Spectrogram& spec2,
                               double floor = kMagnitudeFloor) {
  require(spec1.frames() == spec2.frames() && spec1.bins() == spec2.bins(),
          "cos_ipd: spectrogram shapes differ (", spec1.frames(), "x", spec1.bins(),
          " vs ", spec2.frames(), "x", spec2.bins(), ")");
  Eigen::MatrixXd out(spec1.frames(), spec1.bins());
  for (Eigen::Index t = 0; t < spec1.frames(); ++t) {
    for (Eigen::Index f = 0; f < spec1.bins(); ++f) {
      const std::complex<double> y1 = spec1.data(t, f);
      const std::complex<double> y2 = spec2.data(t, f);
      const double m1 = std::abs(y1);
      const double m2 = std::abs(y2);
      if (m1 < floor || m2 < floor) {
        out(t, f) = 1.0;
      } else {
        const double c = (y1.real() * y2.real() + y1.imag() * y2.imag()) / (m1 * m2);
        out(t, f) = std::clamp(c, -1.0, 1.0);
      }
    }
  }
  return out;
}

inline FeatureTensor assemble_features(const Spectrogram& spec1, const Spectrogram& spec2,
                                       double floor = kMagnitudeFloor) {
  FeatureTensor ft;
  ft.log_mag1 = log_magnitude(spec1, floor);
  ft.log_mag2 = log_magnitude(spec2, floor);
  ft.cos_ipd = cos_ipd(spec1, spec2, floor);
  return ft;
}

// Rank-3 frames x bins x 3 tensor, component order [log|y1|, log|y2|, cosIPD].
inline Tensor features_to_tensor(const FeatureTensor& ft) {
  Tensor t;
  t.dims = {static_cast<uint64_t>(ft.frames()), static_cast<uint64_t>(ft.bins()), 3};
  t.data.resize(static_cast<size_t>(ft.units()) * 3);
  size_t pos = 0;
  for (Eigen::Index tt = 0; tt < ft.frames(); ++tt) {
    for (Eigen::Index f = 0; f < ft.bins(); ++f) {
      t.data[pos++] = static_cast<float>(ft.log_mag1(tt, f));
      t.data[pos++] = static_cast<float>(ft.log_mag2(tt, f));
      t.data[pos++] = static_cast<float>(ft.cos_ipd(tt, f));
    }
  }
  return t;
}

inline FeatureTensor features_from_tensor(const Tensor& t, const std::string& context) {
  require(t.dims.size() == 3 && t.dims[2] == 3, context,
          ": expected a frames x bins x 3 tensor");
  FeatureTensor ft;
  const Eigen::Index frames = static_cast<Eigen::Index>(t.dims[0]);
  const Eigen::Index bins = static_cast<Eigen::Index>(t.dims[1]);
  ft.log_mag1.resize(frames, bins);
  ft.log_mag2.resize(frames, bins);
  ft.cos_ipd.resize(frames, bins);
  size_t pos = 0;
  for (Eigen::Index tt = 0; tt < frames; ++tt) {
    for (Eigen::Index f = 0; f < bins; ++f) {
      ft.log_mag1(tt, f) = t.data[pos++];
      ft.log_mag2(tt, f) = t.data[pos++];
      ft.cos_ipd(tt, f) = t.data[pos++];
    }
  }
  return ft;
}

}  // namespace mbnsep
