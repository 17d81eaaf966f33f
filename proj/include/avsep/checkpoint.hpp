// avsep/checkpoint.hpp

// Copyright 2026  avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Versioned binary container shared by model checkpoints and NMF
// dictionaries. Layout, all integers and floats little-endian:
//
//   "AVSEPCKP"  u32 version  u32 kind
//   kind 1 (CvaeModel):
//     u32 F  u32 L  u32 M  u32 M_raw  f64 variance_floor  u32 net_count
//     per net: u32 head  u32 activation  u32 dim_count  u32 dims[dim_count]
//     per net: u64 param_count  f64 params[param_count]
//   kind 2 (matrix set):
//     u32 count, per matrix: u32 rows  u32 cols
//     per matrix: f64 values[rows * cols], column-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "avsep/vae.hpp"

namespace avsep::checkpoint {

inline constexpr char kMagic[8] = {'A', 'V', 'S', 'E', 'P', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kKindModel = 1;
inline constexpr std::uint32_t kKindMatrices = 2;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : buf_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  void expect_magic() {
    need(8);
    if (std::memcmp(buf_.data() + pos_, kMagic, 8) != 0) throw DataError("checkpoint: bad magic");
    pos_ += 8;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError("checkpoint: truncated file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

namespace detail {

inline void header(Writer& w, std::uint32_t kind) {
  w.raw(kMagic, 8);
  w.u32(kVersion);
  w.u32(kind);
}

inline void check_header(Reader& r, std::uint32_t kind) {
  r.expect_magic();
  const auto version = r.u32();
  if (version != kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto k = r.u32();
  if (k != kind) throw DataError("checkpoint: unexpected content kind " + std::to_string(k));
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline std::vector<char> encode_model(const CvaeModel& m) {
  Writer w;
  detail::header(w, kKindModel);
  w.u32(static_cast<std::uint32_t>(m.dims.bins));
  w.u32(static_cast<std::uint32_t>(m.dims.latent));
  w.u32(static_cast<std::uint32_t>(m.dims.visual));
  w.u32(static_cast<std::uint32_t>(m.dims.visual_raw));
  w.f64(m.variance_floor);
  const auto nets = m.nets();
  w.u32(static_cast<std::uint32_t>(nets.size()));
  for (const DenseNet* n : nets) {
    w.u32(static_cast<std::uint32_t>(n->head()));
    w.u32(static_cast<std::uint32_t>(n->hidden_activation()));
    w.u32(static_cast<std::uint32_t>(n->dims().size()));
    for (int d : n->dims()) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const DenseNet* n : nets) {
    w.u64(static_cast<std::uint64_t>(n->num_params()));
    for (double x : n->params()) w.f64(x);
  }
  return w.bytes();
}

inline CvaeModel decode_model(const std::vector<char>& bytes) {
  Reader r(bytes);
  detail::check_header(r, kKindModel);
  ModelDims d;
  d.bins = static_cast<int>(r.u32());
  d.latent = static_cast<int>(r.u32());
  d.visual = static_cast<int>(r.u32());
  d.visual_raw = static_cast<int>(r.u32());
  const double floor = r.f64();
  if (r.u32() != 4) throw DataError("checkpoint: expected 4 networks");
  std::vector<std::vector<int>> dims(4);
  for (auto& nd : dims) {
    r.u32();  // head, implied by position
    r.u32();  // activation
    const auto count = r.u32();
    if (count < 2 || count > 64) throw DataError("checkpoint: bad layer count");
    for (std::uint32_t i = 0; i < count; ++i) nd.push_back(static_cast<int>(r.u32()));
  }
  // Hidden widths come from the stored layer dims.
  const auto& enc = dims[CvaeModel::kEncoder];
  d.hidden_layers = static_cast<int>(enc.size()) - 2;
  d.hidden = d.hidden_layers > 0 ? enc[1] : d.hidden;
  d.frontend_hidden = dims[CvaeModel::kFrontend].size() > 2 ? dims[CvaeModel::kFrontend][1] : 0;
  CvaeModel m = make_model(d, floor);
  auto nets = m.nets();
  for (std::size_t k = 0; k < nets.size(); ++k)
    if (nets[k]->dims() != dims[k]) throw DataError("checkpoint: layer dims inconsistent with header");
  for (DenseNet* n : nets) {
    const auto count = r.u64();
    if (count != static_cast<std::uint64_t>(n->num_params()))
      throw DataError("checkpoint: parameter block size mismatch");
    for (auto& x : n->params()) x = r.f64();
    if (!n->params().allFinite()) throw NumericalError("checkpoint: non-finite parameter");
  }
  if (!r.at_end()) throw DataError("checkpoint: trailing bytes");
  return m;
}

inline std::vector<char> encode_matrices(const std::vector<Matrix>& ms) {
  Writer w;
  detail::header(w, kKindMatrices);
  w.u32(static_cast<std::uint32_t>(ms.size()));
  for (const auto& m : ms) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
  }
  for (const auto& m : ms)
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
  return w.bytes();
}

inline std::vector<Matrix> decode_matrices(const std::vector<char>& bytes) {
  Reader r(bytes);
  detail::check_header(r, kKindMatrices);
  const auto count = r.u32();
  std::vector<Matrix> ms;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = r.u32(), cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > bytes.size())
      throw DataError("checkpoint: matrix dims exceed file size");
    ms.emplace_back(rows, cols);
  }
  for (auto& m : ms)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  if (!r.at_end()) throw DataError("checkpoint: trailing bytes");
  return ms;
}

inline void save_model(const std::filesystem::path& p, const CvaeModel& m) {
  detail::write_file(p, encode_model(m));
}
inline CvaeModel load_model(const std::filesystem::path& p) {
  try {
    return decode_model(detail::read_file(p));
  } catch (const DataError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}
inline void save_matrices(const std::filesystem::path& p, const std::vector<Matrix>& ms) {
  detail::write_file(p, encode_matrices(ms));
}
inline std::vector<Matrix> load_matrices(const std::filesystem::path& p) {
  try {
    return decode_matrices(detail::read_file(p));
  } catch (const DataError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

}  // namespace avsep::checkpoint
