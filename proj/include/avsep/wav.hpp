// avsep/wav.hpp

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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "avsep/dsp.hpp"

namespace avsep::wav {

namespace detail {

inline void put_u32(std::vector<char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::vector<char>& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

/// Encodes a mono 16-bit little-endian PCM RIFF file. Samples are clipped
/// to [-1, 1] before quantization.
inline std::vector<char> encode(const Waveform& w) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  std::vector<char> b;
  b.reserve(44 + data_bytes);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_u16(b, 2);
  detail::put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(b, data_bytes);
  for (double x : w.samples) {
    if (!std::isfinite(x)) throw NumericalError("wav: non-finite sample");
    const double c = std::clamp(x, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    detail::put_u16(b, static_cast<std::uint16_t>(q));
  }
  return b;
}

inline Waveform decode(const std::vector<char>& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw DataError("wav: not a RIFF/WAVE file");
  std::size_t pos = 12;
  int channels = 0, bits = 0, format = 0;
  Waveform w;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = detail::get_u32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    if (pos + 8 + len > bytes.size()) throw DataError("wav: truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (len < 16) throw DataError("wav: short fmt chunk");
      format = detail::get_u16(body);
      channels = detail::get_u16(body + 2);
      w.sample_rate = static_cast<int>(detail::get_u32(body + 4));
      bits = detail::get_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data chunk before fmt chunk");
      if (format != 1 || channels != 1 || bits != 16)
        throw DataError("wav: only mono 16-bit PCM is supported");
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(detail::get_u16(body + 2 * i)) / 32767.0;
      return w;
    }
    pos += 8 + len + (len & 1);
  }
  throw DataError("wav: no data chunk");
}

inline void write(const std::filesystem::path& path, const Waveform& w) {
  const auto b = encode(w);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

inline Waveform read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<char> b((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode(b);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace avsep::wav
