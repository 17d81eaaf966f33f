// avsep/corpus_io.hpp

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

// On-disk corpus: a JSON manifest next to WAV files and embedding files.
//
// Embedding file, little-endian:
//   "AVSEPEMB"  u32 version  u32 dims  u32 frames  f64 values[dims * frames]
// values are stored frame after frame (column-major for a dims x frames
// matrix).

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avsep/checkpoint.hpp"
#include "avsep/synthdata.hpp"
#include "avsep/wav.hpp"

namespace avsep::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline constexpr char kEmbeddingMagic[8] = {'A', 'V', 'S', 'E', 'P', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr int kManifestVersion = 1;

inline std::vector<char> encode_embedding(const Matrix& e) {
  checkpoint::Writer w;
  w.raw(kEmbeddingMagic, 8);
  w.u32(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(e.rows()));
  w.u32(static_cast<std::uint32_t>(e.cols()));
  for (Eigen::Index i = 0; i < e.size(); ++i) w.f64(e.data()[i]);
  return w.bytes();
}

inline Matrix decode_embedding(const std::vector<char>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kEmbeddingMagic, 8) != 0)
    throw DataError("embedding: bad magic");
  std::vector<char> rest(bytes.begin() + 8, bytes.end());
  checkpoint::Reader r(rest);
  if (r.u32() != kEmbeddingVersion) throw DataError("embedding: unsupported version");
  const auto dims = r.u32(), frames = r.u32();
  if (static_cast<std::uint64_t>(dims) * frames * 8 + 12 != rest.size())
    throw DataError("embedding: size does not match header");
  Matrix e(dims, frames);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = r.f64();
  return e;
}

inline void save_embedding(const fs::path& p, const Matrix& e) {
  checkpoint::detail::write_file(p, encode_embedding(e));
}

inline Matrix load_embedding(const fs::path& p) {
  try {
    return decode_embedding(checkpoint::detail::read_file(p));
  } catch (const DataError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot open " + p.string() + " for writing");
  os << text;
  if (!os) throw DataError("write failed: " + p.string());
}

inline std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline Json speaker_json(const synth::SynthSpeakerSpec& s) {
  Json bands = Json::array();
  for (const auto& b : s.bands) bands.push_back({b.center_hz, b.bandwidth_hz, b.gain});
  return {{"id", s.id}, {"slot", s.slot}, {"modulation_rate_hz", s.modulation_rate_hz},
          {"seed", s.seed}, {"bands", bands}};
}

inline synth::SynthSpeakerSpec speaker_from_json(const Json& j) {
  synth::SynthSpeakerSpec s;
  s.id = j.at("id").get<std::string>();
  s.slot = j.at("slot").get<int>();
  s.modulation_rate_hz = j.at("modulation_rate_hz").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& b : j.at("bands")) s.bands.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>()});
  return s;
}

/// Mixture written next to the corpus for quick `separate` runs.
struct DemoEntry {
  std::string utt1, utt2;
  synth::MixSpec spec;
  double scale = 1.0;  // common factor applied to keep the files within [-1, 1]
};

/// Writes WAVs, embeddings and manifest.json under `dir`; returns the
/// manifest path.
inline fs::path write_corpus(const synth::Corpus& c, const fs::path& dir, const DemoEntry* demo = nullptr,
                             const synth::Mixture* demo_mix = nullptr) {
  fs::create_directories(dir / "wav");
  fs::create_directories(dir / "emb");
  Json utts = Json::array();
  for (const auto& u : c.utterances) {
    const std::string wav_rel = "wav/" + u.id + ".wav", emb_rel = "emb/" + u.id + ".emb";
    wav::write(dir / wav_rel, u.data.wave);
    save_embedding(dir / emb_rel, u.data.embedding);
    utts.push_back({{"id", u.id},
                    {"speaker", c.speakers[static_cast<std::size_t>(u.speaker)].id},
                    {"split", synth::to_string(u.split)},
                    {"seed", u.seed},
                    {"wav", wav_rel},
                    {"embedding", emb_rel},
                    {"samples", u.data.wave.size()},
                    {"frames", u.data.embedding.cols()}});
  }
  Json speakers = Json::array();
  for (const auto& s : c.speakers) speakers.push_back(speaker_json(s));
  Json m = {{"format", "avsep-corpus"},
            {"version", kManifestVersion},
            {"seed", c.config.seed},
            {"n_utt", c.config.n_utt},
            {"duration", c.config.duration},
            {"sample_rate", c.config.sample_rate},
            {"fft_size", c.config.stft.fft_size},
            {"hop", c.config.stft.hop},
            {"speakers", speakers},
            {"utterances", utts}};
  if (demo && demo_mix) {
    fs::create_directories(dir / "demo");
    wav::write(dir / "demo/mixture.wav", demo_mix->mixture);
    wav::write(dir / "demo/ref1.wav", demo_mix->ref1);
    wav::write(dir / "demo/ref2.wav", demo_mix->ref2);
    wav::write(dir / "demo/noise.wav", demo_mix->noise);
    m["demo"] = {{"mixture", "demo/mixture.wav"},
                 {"ref1", "demo/ref1.wav"},
                 {"ref2", "demo/ref2.wav"},
                 {"noise", "demo/noise.wav"},
                 {"v1", "emb/" + demo->utt1 + ".emb"},
                 {"v2", "emb/" + demo->utt2 + ".emb"},
                 {"speaker_snr_db", demo->spec.speaker_snr_db},
                 {"noise_type", synth::to_string(demo->spec.noise_type)},
                 {"noise_snr_db", demo->spec.noise_snr_db},
                 {"scale", demo->scale}};
  }
  const fs::path path = dir / "manifest.json";
  write_text(path, m.dump(2) + "\n");
  return path;
}

/// Accepts the manifest file or the directory holding it.
inline fs::path manifest_path(const fs::path& p) {
  return fs::is_directory(p) ? p / "manifest.json" : p;
}

inline Json read_manifest(const fs::path& p) {
  const fs::path path = manifest_path(p);
  if (!fs::exists(path)) throw DataError("corpus manifest not found: " + path.string());
  Json m;
  try {
    m = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (m.value("format", "") != "avsep-corpus") throw DataError(path.string() + ": not an avsep corpus manifest");
  if (m.value("version", 0) != kManifestVersion) throw DataError(path.string() + ": unsupported manifest version");
  return m;
}

/// Rebuilds a Corpus from disk. Waveforms carry the 16-bit quantization of
/// the WAV files.
inline synth::Corpus load_corpus(const fs::path& p) {
  const fs::path path = manifest_path(p);
  const Json m = read_manifest(path);
  const fs::path dir = path.parent_path();
  synth::Corpus c;
  try {
    c.config.seed = m.at("seed").get<std::uint64_t>();
    c.config.n_utt = m.at("n_utt").get<int>();
    c.config.duration = m.at("duration").get<double>();
    c.config.sample_rate = m.at("sample_rate").get<int>();
    c.config.stft = StftConfig{m.at("fft_size").get<int>(), m.at("hop").get<int>()};
    for (const auto& s : m.at("speakers")) c.speakers.push_back(speaker_from_json(s));
    for (const auto& u : m.at("utterances")) {
      synth::UtteranceRecord r;
      r.id = u.at("id").get<std::string>();
      const auto spk = u.at("speaker").get<std::string>();
      r.speaker = -1;
      for (std::size_t k = 0; k < c.speakers.size(); ++k)
        if (c.speakers[k].id == spk) r.speaker = static_cast<int>(k);
      if (r.speaker < 0) throw DataError("utterance " + r.id + " names unknown speaker " + spk);
      r.split = synth::split_from_string(u.at("split").get<std::string>());
      r.seed = u.at("seed").get<std::uint64_t>();
      r.data.wave = wav::read(dir / u.at("wav").get<std::string>());
      r.data.embedding = load_embedding(dir / u.at("embedding").get<std::string>());
      if (r.data.wave.size() != u.at("samples").get<std::size_t>())
        throw DataError(r.id + ": WAV length differs from manifest");
      if (r.data.embedding.cols() != c.config.stft.num_frames(r.data.wave.size()))
        throw DataError(r.id + ": embedding frames do not match the STFT frame count");
      c.utterances.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  c.config.validate();
  return c;
}

}  // namespace avsep::io
