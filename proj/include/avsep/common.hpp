// avsep/common.hpp

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

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace avsep {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using Rng = std::mt19937_64;

/// Base class of every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or missing option.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed, missing or inconsistent input data (includes shape mismatches).
struct DataError : Error {
  using Error::Error;
};

/// A non-finite value was produced or detected.
struct NumericalError : Error {
  using Error::Error;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Seed for the named sub-stream `stream`/`index` of a global seed.
/// All randomness in the project flows through this function.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                 std::uint64_t index = 0) {
  std::uint64_t h = detail::splitmix64(seed ^ detail::fnv1a(stream));
  return detail::splitmix64(h + detail::splitmix64(index));
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DataError(what);
}

inline void require_finite(const Eigen::Ref<const Matrix>& m,
                           const std::string& what) {
  if (!m.allFinite()) throw NumericalError(what + ": non-finite value");
}

}  // namespace avsep
