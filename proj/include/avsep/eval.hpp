// avsep/eval.hpp

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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "avsep/dsp.hpp"
#include "avsep/synthdata.hpp"

namespace avsep::eval {

inline constexpr double kSdrCap = 60.0;

/// Scale-invariant SDR in dB, clamped to [-60, 60].
inline double si_sdr(const Waveform& reference, const Waveform& estimate) {
  if (reference.size() != estimate.size()) throw DataError("si_sdr: length mismatch");
  double ss = 0.0, es = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ss += reference.samples[i] * reference.samples[i];
    es += estimate.samples[i] * reference.samples[i];
  }
  if (ss <= 0.0) throw DataError("si_sdr: zero reference");
  const double a = es / ss;
  double target = 0.0, resid = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = a * reference.samples[i];
    const double r = estimate.samples[i] - t;
    target += t * t;
    resid += r * r;
  }
  if (target <= 0.0) return -kSdrCap;
  if (resid <= 0.0) return kSdrCap;
  return std::clamp(10.0 * std::log10(target / resid), -kSdrCap, kSdrCap);
}

struct PairScore {
  double si_sdr_mix[2];
  double si_sdr_est[2];
  double improvement[2];
  bool swapped = false;  // best assignment differs from the conditioning order

  double mean_improvement() const { return 0.5 * (improvement[0] + improvement[1]); }
  double mean_est() const { return 0.5 * (si_sdr_est[0] + si_sdr_est[1]); }
  double mean_mix() const { return 0.5 * (si_sdr_mix[0] + si_sdr_mix[1]); }
};

/// Scores both estimate-to-reference assignments and keeps the one with the
/// higher mean SI-SDR.
inline PairScore evaluate_pair(const Waveform& ref1, const Waveform& ref2, const Waveform& est1,
                               const Waveform& est2, const Waveform& mixture) {
  const double direct[2] = {si_sdr(ref1, est1), si_sdr(ref2, est2)};
  const double crossed[2] = {si_sdr(ref1, est2), si_sdr(ref2, est1)};
  PairScore p;
  p.si_sdr_mix[0] = si_sdr(ref1, mixture);
  p.si_sdr_mix[1] = si_sdr(ref2, mixture);
  p.swapped = crossed[0] + crossed[1] > direct[0] + direct[1];
  for (int i = 0; i < 2; ++i) {
    p.si_sdr_est[i] = p.swapped ? crossed[i] : direct[i];
    p.improvement[i] = p.si_sdr_est[i] - p.si_sdr_mix[i];
  }
  return p;
}

/// One benchmark input: a mixture, its references and both embeddings.
struct BenchItem {
  synth::Mixture mix;
  const Matrix* visual1 = nullptr;
  const Matrix* visual2 = nullptr;
  synth::NoiseType noise_type = synth::NoiseType::White;
  double snr_db = 0.0;
};

using SeparationFn = std::function<std::pair<Waveform, Waveform>(const BenchItem&)>;

struct Method {
  std::string name;
  SeparationFn run;
};

struct BenchRow {
  std::string method;
  std::string noise_type;
  double snr_db = 0.0;
  double si_sdr_mix = 0.0;  // means over pairs and both speakers
  double si_sdr_est = 0.0;
  double improvement = 0.0;
  int swapped = 0;          // pairs whose best assignment was crossed
  int count = 0;
};

/// Returns the mixture for both speakers.
inline Method identity_method() {
  return {"identity", [](const BenchItem& it) { return std::make_pair(it.mix.mixture, it.mix.mixture); }};
}

/// Ideal Wiener masks built from the true source powers.
inline Method oracle_wiener_method(const StftConfig& c) {
  return {"oracle", [c](const BenchItem& it) {
            const auto x = stft(it.mix.mixture, c);
            const Matrix p1 = power(stft(it.mix.ref1, c)).values;
            const Matrix p2 = power(stft(it.mix.ref2, c)).values;
            const Matrix pb = power(stft(it.mix.noise, c)).values;
            const Matrix total = (p1 + p2 + pb).cwiseMax(1e-300);
            const ComplexSpectrogram s1{x.values.cwiseProduct(p1.cwiseQuotient(total).cast<std::complex<double>>())};
            const ComplexSpectrogram s2{x.values.cwiseProduct(p2.cwiseQuotient(total).cast<std::complex<double>>())};
            const auto n = it.mix.mixture.size();
            return std::make_pair(istft(s1, c, n, it.mix.mixture.sample_rate),
                                  istft(s2, c, n, it.mix.mixture.sample_rate));
          }};
}

/// A test pair: speaker-1 and speaker-2 utterances with their embeddings.
struct TestPair {
  const synth::Utterance* spk1;
  const synth::Utterance* spk2;
};

/// Runs every method on every (noise type, SNR, pair) mixture. Mixtures are
/// seeded per cell and pair, so all methods see identical inputs. Rows are
/// ordered method-major, then noise type, then SNR.
inline std::vector<BenchRow> benchmark(const std::vector<Method>& methods, const std::vector<TestPair>& pairs,
                                       const std::vector<double>& snrs,
                                       const std::vector<synth::NoiseType>& noise_types, std::uint64_t seed,
                                       const std::function<void(const std::string&)>& log = {}) {
  if (pairs.empty()) throw DataError("benchmark: no test pairs");
  std::map<std::pair<std::size_t, std::size_t>, std::vector<PairScore>> scores;  // (method, cell)
  std::size_t cell = 0;
  for (synth::NoiseType nt : noise_types) {
    for (double snr : snrs) {
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        Rng rng = make_rng(seed, "bench/" + synth::to_string(nt) + "/" + std::to_string(snr), p);
        BenchItem item{synth::mix(pairs[p].spk1->wave, pairs[p].spk2->wave, {0.0, nt, snr}, rng),
                       &pairs[p].spk1->embedding, &pairs[p].spk2->embedding, nt, snr};
        for (std::size_t m = 0; m < methods.size(); ++m) {
          auto [e1, e2] = methods[m].run(item);
          scores[{m, cell}].push_back(evaluate_pair(item.mix.ref1, item.mix.ref2, e1, e2, item.mix.mixture));
          if (log) {
            std::ostringstream os;
            os << methods[m].name << " " << synth::to_string(nt) << " " << snr << " dB pair " << p << ": "
               << std::fixed << std::setprecision(2) << scores[{m, cell}].back().mean_improvement() << " dB";
            log(os.str());
          }
        }
      }
      ++cell;
    }
  }
  std::vector<BenchRow> rows;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::size_t c = 0;
    for (synth::NoiseType nt : noise_types) {
      for (double snr : snrs) {
        BenchRow r{methods[m].name, synth::to_string(nt), snr};
        for (const PairScore& s : scores[{m, c}]) {
          r.si_sdr_mix += s.mean_mix();
          r.si_sdr_est += s.mean_est();
          r.improvement += s.mean_improvement();
          r.swapped += s.swapped ? 1 : 0;
          ++r.count;
        }
        r.si_sdr_mix /= r.count;
        r.si_sdr_est /= r.count;
        r.improvement /= r.count;
        rows.push_back(r);
        ++c;
      }
    }
  }
  return rows;
}

/// Mean improvement of one method over all its rows.
inline double mean_improvement(const std::vector<BenchRow>& rows, const std::string& method) {
  double s = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.method == method) {
      s += r.improvement;
      ++n;
    }
  if (n == 0) throw DataError("no rows for method " + method);
  return s / n;
}

inline std::string to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "method,noise_type,snr_db,si_sdr_mix,si_sdr_est,improvement\n";
  os << std::setprecision(10);
  for (const auto& r : rows)
    os << r.method << ',' << r.noise_type << ',' << r.snr_db << ',' << r.si_sdr_mix << ',' << r.si_sdr_est << ','
       << r.improvement << '\n';
  return os.str();
}

/// gnuplot data: improvement vs SNR (averaged over noise types) and vs noise
/// type (averaged over SNRs), one column per method.
inline void write_gnuplot(const std::vector<BenchRow>& rows, const std::filesystem::path& dir) {
  std::vector<std::string> methods, noises;
  std::vector<double> snrs;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(noises.begin(), noises.end(), r.noise_type) == noises.end()) noises.push_back(r.noise_type);
    if (std::find(snrs.begin(), snrs.end(), r.snr_db) == snrs.end()) snrs.push_back(r.snr_db);
  }
  auto avg = [&](const std::string& m, auto pred) {
    double s = 0;
    int n = 0;
    for (const auto& r : rows)
      if (r.method == m && pred(r)) s += r.improvement, ++n;
    return n ? s / n : 0.0;
  };
  std::ofstream a(dir / "improvement_vs_snr.dat"), b(dir / "improvement_vs_noise.dat");
  if (!a || !b) throw DataError("cannot write gnuplot files in " + dir.string());
  a << "# snr_db";
  b << "# index noise_type";
  for (const auto& m : methods) a << ' ' << m, b << ' ' << m;
  a << '\n';
  b << '\n';
  for (double s : snrs) {
    a << s;
    for (const auto& m : methods) a << ' ' << avg(m, [s](const BenchRow& r) { return r.snr_db == s; });
    a << '\n';
  }
  for (std::size_t i = 0; i < noises.size(); ++i) {
    b << i << ' ' << noises[i];
    for (const auto& m : methods) b << ' ' << avg(m, [&](const BenchRow& r) { return r.noise_type == noises[i]; });
    b << '\n';
  }
}

}  // namespace avsep::eval
