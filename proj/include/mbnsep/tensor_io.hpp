// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mbnsep/util.hpp"

namespace mbnsep {

// MBNT tensor container:
//   magic "MBNT" | version byte (1) | u32 rank | rank x u64 dims |
//   row-major float32 payload, all little-endian.
struct Tensor {
  std::vector<uint64_t> dims;
  std::vector<float> data;

  uint64_t size() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "tensor i/o assumes a little-endian host");

template <typename T>
void put_raw(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_raw(const std::string& buf, size_t& pos, const std::string& path) {
  require(pos + sizeof(T) <= buf.size(), path, ": truncated file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

constexpr uint8_t kTensorVersion = 1;
constexpr uint64_t kMaxTensorElems = uint64_t{1} << 34;

}  // namespace detail

inline void save_tensor(const std::string& path, const Tensor& t) {
  uint64_t n = 1;
  for (uint64_t d : t.dims) {
    require(d > 0, path, ": zero-sized tensor dimension");
    require(n <= detail::kMaxTensorElems / d, path, ": tensor dimension overflow");
    n *= d;
  }
  require(n == t.data.size(), path, ": dims/payload mismatch");
  std::string buf;
  buf.reserve(16 + t.dims.size() * 8 + t.data.size() * 4);
  buf.append("MBNT", 4);
  detail::put_raw(buf, detail::kTensorVersion);
  detail::put_raw(buf, static_cast<uint32_t>(t.dims.size()));
  for (uint64_t d : t.dims) detail::put_raw(buf, d);
  buf.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * 4);
  atomic_write_file(path, buf);
}

inline Tensor load_tensor(const std::string& path) {
  const std::string buf = read_file(path);
  require(buf.size() >= 4 && std::memcmp(buf.data(), "MBNT", 4) == 0,
          path, ": not an MBNT tensor (bad magic)");
  size_t pos = 4;
  const uint8_t version = detail::get_raw<uint8_t>(buf, pos, path);
  require(version == detail::kTensorVersion, path, ": unsupported MBNT version ",
          static_cast<int>(version));
  const uint32_t rank = detail::get_raw<uint32_t>(buf, pos, path);
  require(rank >= 1 && rank <= 8, path, ": unsupported tensor rank ", rank);
  Tensor t;
  t.dims.resize(rank);
  uint64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    t.dims[i] = detail::get_raw<uint64_t>(buf, pos, path);
    require(t.dims[i] > 0, path, ": zero-sized tensor dimension");
    require(n <= detail::kMaxTensorElems / t.dims[i], path, ": tensor dimension overflow");
    n *= t.dims[i];
  }
  require(buf.size() - pos == n * 4, path, ": payload size does not match dims");
  t.data.resize(n);
  std::memcpy(t.data.data(), buf.data() + pos, n * 4);
  return t;
}

inline Tensor tensor_from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.dims = {static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols())};
  t.data.resize(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[static_cast<size_t>(r) * m.cols() + c] = static_cast<float>(m(r, c));
  return t;
}

inline Eigen::MatrixXd matrix_from_tensor(const Tensor& t, const std::string& context) {
  require(t.dims.size() == 2, context, ": expected a rank-2 tensor, got rank ",
          t.dims.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims[0]),
                    static_cast<Eigen::Index>(t.dims[1]));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = t.data[static_cast<size_t>(r) * m.cols() + c];
  return m;
}

}  // namespace mbnsep
