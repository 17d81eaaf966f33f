// avsep/cli.hpp

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

// Commands behind the `avsep` executable. Every command takes one flat
// key/value Config (file contents plus command-line overrides) and writes
// its results under the `out` directory.

#include <algorithm>
#include <charconv>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avsep/checkpoint.hpp"
#include "avsep/corpus_io.hpp"
#include "avsep/estimator.hpp"
#include "avsep/eval.hpp"
#include "avsep/nmf.hpp"
#include "avsep/synthdata.hpp"
#include "avsep/train.hpp"
#include "avsep/wav.hpp"

namespace avsep::cli {

namespace fs = std::filesystem;

/// Every key a config may hold.
inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> k{
      // paths and selection
      "out", "corpus", "model", "model1", "model2", "nmf", "train_dir", "mixture", "v1", "v2", "speaker",
      "speaker_dependent",
      // corpus
      "seed", "n_utt", "duration", "sample_rate", "fft_size", "hop", "demo_noise_type", "demo_noise_snr_db",
      "demo_speaker_snr_db",
      // model and training
      "latent", "hidden", "hidden_layers", "frontend_hidden", "visual", "alpha", "learning_rate", "epochs",
      "batch_size", "variance_floor", "finetune_epochs", "finetune_learning_rate",
      // NMF
      "nmf_rank", "nmf_iters", "nmf_noise_rank", "nmf_exponent",
      // MCEM
      "em_iters", "first_mh_iters", "first_burn_in", "mh_iters", "burn_in", "samples", "epsilon", "gain_floor",
      "noise_rank", "tol", "final_sweeps", "wiener_stats",
      // benchmark
      "snr_grid", "noise_types", "bench_pairs", "methods"};
  return k;
}

/// Flat string map with typed getters. Values parse strictly; a malformed
/// value or unknown key is a ConfigError.
class Config {
 public:
  Config() = default;

  /// JSON object (scalar values only) or `key = value` lines with `#`
  /// comments.
  static Config from_text(const std::string& text, const std::string& origin = "config") {
    Config c;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
      }
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (it->is_string()) c.set(it.key(), it->get<std::string>());
        else if (it->is_number_unsigned()) c.set(it.key(), std::to_string(it->get<std::uint64_t>()));
        else if (it->is_number_integer()) c.set(it.key(), std::to_string(it->get<std::int64_t>()));
        else if (it->is_number() || it->is_boolean()) c.set(it.key(), it->dump());
        else if (it->is_array()) {
          std::string s;
          for (const auto& v : *it) s += (s.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
          c.set(it.key(), s);
        } else throw ConfigError(origin + ": key '" + it.key() + "' must be a scalar or a list");
      }
      return c;
    }
    std::istringstream is(text);
    std::string line;
    int no = 0;
    while (std::getline(is, line)) {
      ++no;
      line = line.substr(0, line.find('#'));
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(no) + ": expected key = value");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  static Config from_file(const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("config file not found: " + p.string());
    return from_text(io::read_text(p), p.string());
  }

  void set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// "key=value" as given to --set.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def = "") const {
    const auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  fs::path path(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required setting '" + key + "'");
    return fs::path(str(key));
  }

  int integer(const std::string& key, int def) const { return parse<int>(key, def); }
  std::uint64_t u64(const std::string& key, std::uint64_t def) const { return parse<std::uint64_t>(key, def); }

  double real(const std::string& key, double def) const {
    if (!has(key)) return def;
    const std::string s = str(key);
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    return parse<double>(key, def);
  }

  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const std::string s = str(key);
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ConfigError("setting '" + key + "' expects a boolean, got '" + s + "'");
  }

  std::vector<std::string> list(const std::string& key, const std::string& def) const {
    std::vector<std::string> out;
    std::istringstream is(str(key, def));
    std::string item;
    while (std::getline(is, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::uint64_t seed() const {
    if (!has("seed")) throw ConfigError("a seed is required (--seed or 'seed' in the config)");
    return u64("seed", 0);
  }

  /// Sorted `key = value` lines.
  std::string to_text() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  template <typename T>
  T parse(const std::string& key, T def) const {
    if (!has(key)) return def;
    const std::string s = str(key);
    T v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError("setting '" + key + "' has malformed value '" + s + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views of a Config. Defaults are the desk-scale preset.

inline synth::CorpusConfig corpus_config(const Config& c) {
  synth::CorpusConfig cc;
  cc.seed = c.seed();
  cc.n_utt = c.integer("n_utt", 12);
  cc.duration = c.real("duration", 2.0);
  cc.sample_rate = c.integer("sample_rate", 16000);
  cc.stft = StftConfig{c.integer("fft_size", 512), c.integer("hop", 256)};
  if (cc.sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  cc.validate();
  return cc;
}

inline ModelDims model_dims(const Config& c, int bins) {
  ModelDims d;
  d.bins = bins;
  d.latent = c.integer("latent", 16);
  d.hidden = c.integer("hidden", 64);
  d.hidden_layers = c.integer("hidden_layers", 1);
  d.frontend_hidden = c.integer("frontend_hidden", 32);
  d.visual = c.integer("visual", 8);
  d.visual_raw = synth::kEmbeddingDim;
  if (d.latent < 1 || d.hidden < 1 || d.hidden_layers < 0 || d.frontend_hidden < 0 || d.visual < 1)
    throw ConfigError("model sizes must be positive");
  return d;
}

inline TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.seed = c.seed();
  t.alpha = c.real("alpha", 0.9);
  t.learning_rate = c.real("learning_rate", 1e-3);
  t.epochs = c.integer("epochs", 100);
  t.batch_size = c.integer("batch_size", 64);
  t.variance_floor = c.real("variance_floor", 1e-6);
  t.validate();
  return t;
}

inline TrainConfig finetune_config(const Config& c) {
  TrainConfig t = train_config(c);
  t.epochs = c.integer("finetune_epochs", 10);
  t.learning_rate = c.real("finetune_learning_rate", t.learning_rate);
  t.validate();
  return t;
}

inline IsNmfOptions nmf_options(const Config& c) {
  IsNmfOptions o;
  o.iters = c.integer("nmf_iters", 200);
  o.exponent = c.real("nmf_exponent", 1.0);
  if (o.iters < 0) throw ConfigError("nmf_iters must be >= 0");
  if (!(o.exponent > 0.0 && o.exponent <= 1.0)) throw ConfigError("nmf_exponent must lie in (0, 1]");
  return o;
}

inline McemConfig mcem_config(const Config& c) {
  McemConfig m;
  m.seed = c.seed();
  m.em_iters = c.integer("em_iters", m.em_iters);
  m.first_mh_iters = c.integer("first_mh_iters", m.first_mh_iters);
  m.first_burn_in = c.integer("first_burn_in", m.first_burn_in);
  m.mh_iters = c.integer("mh_iters", m.mh_iters);
  m.burn_in = c.integer("burn_in", m.burn_in);
  m.samples = c.integer("samples", m.samples);
  m.epsilon = c.real("epsilon", m.epsilon);
  m.variance_floor = c.real("variance_floor", m.variance_floor);
  m.gain_floor = c.real("gain_floor", m.gain_floor);
  m.noise_rank = c.integer("noise_rank", m.noise_rank);
  m.tol = c.real("tol", m.tol);
  m.final_sweeps = c.integer("final_sweeps", m.final_sweeps);
  m.validate();
  return m;
}

/// McemConfig as flat key/value text, readable back through Config.
inline std::string to_text(const McemConfig& m) {
  std::ostringstream os;
  os.precision(17);
  os << "em_iters = " << m.em_iters << "\nfirst_mh_iters = " << m.first_mh_iters
     << "\nfirst_burn_in = " << m.first_burn_in << "\nmh_iters = " << m.mh_iters << "\nburn_in = " << m.burn_in
     << "\nsamples = " << m.samples << "\nepsilon = " << m.epsilon << "\nvariance_floor = " << m.variance_floor
     << "\ngain_floor = " << m.gain_floor << "\nnoise_rank = " << m.noise_rank << "\ntol = " << m.tol
     << "\nfinal_sweeps = " << m.final_sweeps << "\nseed = " << m.seed << "\n";
  return os.str();
}

inline std::vector<double> snr_list(const Config& c) {
  std::vector<double> out;
  for (const auto& s : c.list("snr_grid", "-15,-10,-5,0,5")) {
    Config tmp;
    tmp.set("snr_grid", s);
    out.push_back(tmp.real("snr_grid", 0.0));
  }
  if (out.empty()) throw ConfigError("snr_grid is empty");
  return out;
}

inline std::vector<synth::NoiseType> noise_list(const Config& c) {
  std::vector<synth::NoiseType> out;
  for (const auto& s : c.list("noise_types", "white,pink,babble")) out.push_back(synth::noise_type_from_string(s));
  if (out.empty()) throw ConfigError("noise_types is empty");
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline void log(const std::string& s) { std::clog << "[avsep] " << s << std::endl; }

inline fs::path out_dir(const Config& c) {
  const fs::path out = c.path("out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out.string());
  return out;
}

inline int speaker_index(const synth::Corpus& corpus, const std::string& id) {
  for (std::size_t k = 0; k < corpus.speakers.size(); ++k)
    if (corpus.speakers[k].id == id) return static_cast<int>(k);
  throw ConfigError("unknown speaker '" + id + "'");
}

inline std::string loss_csv(const std::vector<double>& trace) {
  std::ostringstream os;
  os.precision(12);
  os << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) os << i + 1 << ',' << trace[i] << '\n';
  return os.str();
}

inline std::string qtrace_csv(const std::vector<QTraceRow>& trace) {
  std::ostringstream os;
  os.precision(12);
  os << "iteration,Q,acceptance_rate\n";
  for (const auto& r : trace) os << r.iteration << ',' << r.q << ',' << r.acceptance_rate << '\n';
  return os.str();
}

inline void check_inputs(const CvaeModel& m, const StftConfig& s, const Matrix& v, const std::string& what) {
  if (m.dims.bins != s.num_bins())
    throw DataError("model has " + std::to_string(m.dims.bins) + " frequency bins but fft_size " +
                    std::to_string(s.fft_size) + " gives " + std::to_string(s.num_bins()));
  if (v.rows() != m.dims.visual_raw)
    throw DataError(what + " has " + std::to_string(v.rows()) + " dims, model expects " +
                    std::to_string(m.dims.visual_raw));
}

}  // namespace detail

/// gen: synthetic corpus with manifest, plus one demo mixture of the first
/// test utterance of each speaker.
inline fs::path cmd_gen(const Config& c) {
  const fs::path out = detail::out_dir(c);
  const synth::CorpusConfig cc = corpus_config(c);
  const synth::Corpus corpus = synth::build_corpus(cc, synth::default_speakers());
  const auto t1 = corpus.select(synth::Split::Test, 0);
  const auto t2 = corpus.select(synth::Split::Test, 1);
  io::DemoEntry demo{t1.front()->id, t2.front()->id,
                     {c.real("demo_speaker_snr_db", 0.0),
                      synth::noise_type_from_string(c.str("demo_noise_type", "white")),
                      c.real("demo_noise_snr_db", -5.0)}};
  Rng rng = make_rng(cc.seed, "gen/demo");
  synth::Mixture m = synth::mix(t1.front()->data.wave, t2.front()->data.wave, demo.spec, rng);
  double peak = 0.0;
  for (double x : m.mixture.samples) peak = std::max(peak, std::abs(x));
  if (peak > 0.9) {
    demo.scale = 0.9 / peak;
    for (Waveform* w : {&m.mixture, &m.ref1, &m.ref2, &m.noise})
      for (double& x : w->samples) x *= demo.scale;
  }
  const fs::path manifest = io::write_corpus(corpus, out, &demo, &m);
  io::write_text(out / "gen.config", c.to_text());
  detail::log("wrote " + std::to_string(corpus.utterances.size()) + " utterances, manifest " + manifest.string());
  return manifest;
}

/// Seeded initial model for a training set: random weights and the decoder
/// bias at the log mean clean spectrum.
inline CvaeModel initial_model(const Config& c, const synth::TripleSet& t, int bins) {
  Rng rng = make_rng(c.seed(), "model/init");
  CvaeModel m = make_random_model(model_dims(c, bins), rng, c.real("variance_floor", 1e-6));
  init_decoder_bias(m, t.frames);
  return m;
}

/// Fine-tunes the decoder on one speaker's training triples and writes
/// model_<id>.ckpt and loss_<id>.csv.
inline CvaeModel finetune_speaker(const Config& c, const CvaeModel& base, const synth::Corpus& corpus,
                                  const synth::TripleSet& triples, int speaker, const fs::path& out) {
  const std::string& id = corpus.speakers[static_cast<std::size_t>(speaker)].id;
  const TrainConfig tc = finetune_config(c);
  detail::log("fine-tuning decoder for " + id + " (" + std::to_string(tc.epochs) + " epochs)");
  TrainResult r = finetune_decoder(base, triples.for_speaker(speaker), tc);
  checkpoint::save_model(out / ("model_" + id + ".ckpt"), r.model);
  io::write_text(out / ("loss_" + id + ".csv"), detail::loss_csv(r.loss_trace));
  return std::move(r.model);
}

inline std::vector<int> speakers_named(const synth::Corpus& corpus, const std::string& sel) {
  std::vector<int> out;
  if (sel == "all")
    for (std::size_t k = 0; k < corpus.speakers.size(); ++k) out.push_back(static_cast<int>(k));
  else
    out.push_back(detail::speaker_index(corpus, sel));
  return out;
}

/// train: speaker-independent model, loss trace, NMF speaker dictionaries,
/// and optionally fine-tuned decoders (`speaker_dependent` = id or all).
inline void cmd_train(const Config& c) {
  const fs::path out = detail::out_dir(c);
  const synth::Corpus corpus = io::load_corpus(c.path("corpus"));
  const synth::TripleSet triples = synth::training_triples(corpus, synth::Split::Train, c.seed());
  const int bins = corpus.config.stft.num_bins();
  const TrainConfig tc = train_config(c);
  const CvaeModel init = initial_model(c, triples, bins);
  detail::log("training on " + std::to_string(triples.frames.size()) + " frames, " + std::to_string(tc.epochs) +
              " epochs");
  TrainResult r = train(init, triples.frames, tc);
  checkpoint::save_model(out / "model.ckpt", r.model);
  io::write_text(out / "loss.csv", detail::loss_csv(r.loss_trace));

  nlohmann::json side = {{"alpha", tc.alpha},
                         {"learning_rate", tc.learning_rate},
                         {"epochs", tc.epochs},
                         {"batch_size", tc.batch_size},
                         {"seed", tc.seed},
                         {"variance_floor", tc.variance_floor},
                         {"bins", r.model.dims.bins},
                         {"latent", r.model.dims.latent},
                         {"visual", r.model.dims.visual},
                         {"hidden", r.model.dims.hidden},
                         {"hidden_layers", r.model.dims.hidden_layers},
                         {"frontend_hidden", r.model.dims.frontend_hidden},
                         {"fft_size", corpus.config.stft.fft_size},
                         {"hop", corpus.config.stft.hop},
                         {"training_frames", triples.frames.size()}};
  if (!r.loss_trace.empty()) side["final_loss"] = r.loss_trace.back();
  io::write_text(out / "model.json", side.dump(2) + "\n");

  // One IS-NMF dictionary per speaker from its clean training spectra.
  const IsNmfOptions no = nmf_options(c);
  const int rank = c.integer("nmf_rank", 16);
  std::vector<Matrix> dicts;
  for (std::size_t s = 0; s < corpus.speakers.size(); ++s) {
    std::vector<Matrix> parts;
    Eigen::Index n = 0;
    for (const auto* u : corpus.select(synth::Split::Train, static_cast<int>(s))) {
      parts.push_back(power(stft(u->data.wave, corpus.config.stft)).values);
      n += parts.back().cols();
    }
    PowerSpectrogram P{Matrix(bins, n)};
    Eigen::Index at = 0;
    for (const auto& p : parts) P.values.middleCols(at, p.cols()) = p, at += p.cols();
    Rng rng = make_rng(c.seed(), "nmf/dictionary", s);
    dicts.push_back(fit_is_nmf(P, rank, no.iters, rng, no).model.W);
  }
  checkpoint::save_matrices(out / "nmf.ckpt", dicts);
  io::write_text(out / "train.config", c.to_text());

  if (c.has("speaker_dependent"))
    for (int s : speakers_named(corpus, c.str("speaker_dependent")))
      finetune_speaker(c, r.model, corpus, triples, s, out);
}

/// finetune: decoder adaptation of an existing checkpoint.
inline void cmd_finetune(const Config& c) {
  const fs::path out = detail::out_dir(c);
  const CvaeModel base = checkpoint::load_model(c.path("model"));
  const synth::Corpus corpus = io::load_corpus(c.path("corpus"));
  const synth::TripleSet triples = synth::training_triples(corpus, synth::Split::Train, c.seed());
  if (!c.has("speaker")) throw ConfigError("finetune needs a speaker (--speaker <id|all>)");
  for (int s : speakers_named(corpus, c.str("speaker"))) finetune_speaker(c, base, corpus, triples, s, out);
  io::write_text(out / "finetune.config", c.to_text());
}

/// Resolves model paths: explicit model1/model2 win over train_dir.
struct ModelPaths {
  fs::path generic, speaker1, speaker2;
};

inline ModelPaths model_paths(const Config& c, const std::vector<std::string>& speaker_ids) {
  ModelPaths p;
  if (c.has("train_dir")) {
    const fs::path d = c.path("train_dir");
    if (fs::exists(d / "model.ckpt")) p.generic = d / "model.ckpt";
    if (speaker_ids.size() >= 2) {
      if (fs::exists(d / ("model_" + speaker_ids[0] + ".ckpt"))) p.speaker1 = d / ("model_" + speaker_ids[0] + ".ckpt");
      if (fs::exists(d / ("model_" + speaker_ids[1] + ".ckpt"))) p.speaker2 = d / ("model_" + speaker_ids[1] + ".ckpt");
    }
  }
  if (c.has("model")) p.generic = c.path("model");
  if (c.has("model1")) p.speaker1 = c.path("model1");
  if (c.has("model2")) p.speaker2 = c.path("model2");
  return p;
}

struct SeparateResult {
  fs::path speaker1, speaker2, qtrace;
};

/// separate: MCEM separation of one mixture. Inputs come from `mixture`,
/// `v1`, `v2` or, when `corpus` is set, default to the corpus demo entry.
inline SeparateResult cmd_separate(const Config& c) {
  const fs::path out = detail::out_dir(c);
  StftConfig sc{c.integer("fft_size", 512), c.integer("hop", 256)};
  fs::path mixture, v1, v2;
  std::vector<std::string> ids;
  if (c.has("corpus")) {
    const fs::path mp = io::manifest_path(c.path("corpus"));
    const auto m = io::read_manifest(mp);
    sc = StftConfig{m.at("fft_size").get<int>(), m.at("hop").get<int>()};
    for (const auto& s : m.at("speakers")) ids.push_back(s.at("id").get<std::string>());
    if (m.contains("demo")) {
      mixture = mp.parent_path() / m["demo"]["mixture"].get<std::string>();
      v1 = mp.parent_path() / m["demo"]["v1"].get<std::string>();
      v2 = mp.parent_path() / m["demo"]["v2"].get<std::string>();
    }
  }
  if (c.has("mixture")) mixture = c.path("mixture");
  if (c.has("v1")) v1 = c.path("v1");
  if (c.has("v2")) v2 = c.path("v2");
  if (mixture.empty() || v1.empty() || v2.empty())
    throw ConfigError("separate needs mixture, v1 and v2 (or a corpus with a demo entry)");
  sc.validate();

  const ModelPaths mp = model_paths(c, ids);
  const fs::path p1 = !mp.speaker1.empty() ? mp.speaker1 : mp.generic;
  const fs::path p2 = !mp.speaker2.empty() ? mp.speaker2 : mp.generic;
  if (p1.empty() || p2.empty()) throw ConfigError("separate needs a model (--model, --model1/--model2 or --train-dir)");
  const CvaeModel m1 = checkpoint::load_model(p1);
  const CvaeModel m2 = p2 == p1 ? m1 : checkpoint::load_model(p2);

  const Waveform x = wav::read(mixture);
  const Matrix e1 = io::load_embedding(v1), e2 = io::load_embedding(v2);
  detail::check_inputs(m1, sc, e1, v1.string());
  detail::check_inputs(m2, sc, e2, v2.string());
  const McemConfig mc = mcem_config(c);
  detail::log("separating " + mixture.string() + " (" + std::to_string(mc.em_iters) + " EM iterations)");
  const SeparationOutput o = separate(x, e1, e2, SpeakerModels{&m1, &m2}, sc, mc);

  SeparateResult r{out / "speaker1.wav", out / "speaker2.wav", out / "qtrace.csv"};
  wav::write(r.speaker1, o.speaker1.waveform);
  wav::write(r.speaker2, o.speaker2.waveform);
  io::write_text(r.qtrace, detail::qtrace_csv(o.mcem.trace));
  io::write_text(out / "mcem.config", to_text(mc));
  if (c.flag("wiener_stats", false)) {
    const auto masks = average_masks(o.mcem.state, o.mcem.samples, mc.variance_floor);
    std::ostringstream os;
    os.precision(10);
    os << "frame,mask1_mean,mask2_mean,noise_mask_mean,gain1,gain2\n";
    for (Eigen::Index n = 0; n < masks[0].cols(); ++n)
      os << n << ',' << masks[0].col(n).mean() << ',' << masks[1].col(n).mean() << ',' << masks[2].col(n).mean()
         << ',' << o.mcem.state.speaker(1).gain[n] << ',' << o.mcem.state.speaker(2).gain[n] << '\n';
    io::write_text(out / "wiener_stats.csv", os.str());
  }
  return r;
}

/// bench: every registered method over the SNR grid and noise types on test
/// pairs of the corpus. Writes bench.csv and gnuplot data; returns the rows.
inline std::vector<eval::BenchRow> cmd_bench(const Config& c) {
  const fs::path out = detail::out_dir(c);
  const synth::Corpus corpus = io::load_corpus(c.path("corpus"));
  const StftConfig sc = corpus.config.stft;
  std::vector<std::string> ids;
  for (const auto& s : corpus.speakers) ids.push_back(s.id);
  const ModelPaths mp = model_paths(c, ids);
  fs::path nmf_path = c.has("nmf") ? c.path("nmf") : fs::path();
  if (nmf_path.empty() && c.has("train_dir") && fs::exists(c.path("train_dir") / "nmf.ckpt"))
    nmf_path = c.path("train_dir") / "nmf.ckpt";

  std::vector<std::string> names;
  if (c.has("methods")) {
    names = c.list("methods", "");
  } else {
    names = {"identity", "oracle"};
    if (!nmf_path.empty()) names.push_back("nmf");
    if (!mp.generic.empty()) names.push_back("cvae-i");
    if (!mp.speaker1.empty() && !mp.speaker2.empty()) names.push_back("cvae-d");
  }

  const McemConfig mc = mcem_config(c);
  std::deque<CvaeModel> models;  // stable addresses for the method closures
  std::vector<Matrix> dicts;
  std::vector<eval::Method> methods;
  for (const auto& name : names) {
    if (name == "identity") {
      methods.push_back(eval::identity_method());
    } else if (name == "oracle") {
      methods.push_back(eval::oracle_wiener_method(sc));
    } else if (name == "nmf") {
      if (nmf_path.empty()) throw ConfigError("method nmf needs NMF dictionaries (--nmf or --train-dir)");
      dicts = checkpoint::load_matrices(nmf_path);
      if (dicts.size() < 2) throw DataError(nmf_path.string() + ": expected two speaker dictionaries");
      const int k_noise = c.integer("nmf_noise_rank", 10);
      const int iters = c.integer("nmf_iters", 200);
      const IsNmfOptions no = nmf_options(c);
      const std::uint64_t seed = c.seed();
      methods.push_back({"nmf", [&dicts, sc, k_noise, iters, no, seed](const eval::BenchItem& it) {
                           Rng rng = make_rng(seed, "bench/nmf/" + synth::to_string(it.noise_type),
                                              static_cast<std::uint64_t>(std::llround(it.snr_db * 100 + 100000)));
                           const auto x = stft(it.mix.mixture, sc);
                           const auto b = baseline_separate(x, dicts[0], dicts[1], k_noise, iters, rng, no);
                           const auto n = it.mix.mixture.size();
                           const int fs = it.mix.mixture.sample_rate;
                           return std::make_pair(istft(b.speaker1, sc, n, fs), istft(b.speaker2, sc, n, fs));
                         }});
    } else if (name == "cvae-i" || name == "cvae-d") {
      SpeakerModels sm{nullptr, nullptr};
      if (name == "cvae-i") {
        if (mp.generic.empty()) throw ConfigError("method cvae-i needs a model (--model or --train-dir)");
        models.push_back(checkpoint::load_model(mp.generic));
        sm = shared_model(models.back());
      } else {
        if (mp.speaker1.empty() || mp.speaker2.empty())
          throw ConfigError("method cvae-d needs fine-tuned models (--model1/--model2 or --train-dir)");
        models.push_back(checkpoint::load_model(mp.speaker1));
        models.push_back(checkpoint::load_model(mp.speaker2));
        sm = SpeakerModels{&models[models.size() - 2], &models.back()};
      }
      for (const CvaeModel* m : {sm.speaker1, sm.speaker2})
        if (m->dims.bins != sc.num_bins()) throw DataError("model bins do not match the corpus STFT");
      methods.push_back({name, [sm, sc, mc](const eval::BenchItem& it) {
                           const auto o = separate(it.mix.mixture, *it.visual1, *it.visual2, sm, sc, mc);
                           return std::make_pair(o.speaker1.waveform, o.speaker2.waveform);
                         }});
    } else {
      throw ConfigError("unknown method '" + name + "'");
    }
  }

  const auto t1 = corpus.select(synth::Split::Test, 0), t2 = corpus.select(synth::Split::Test, 1);
  const std::size_t available = std::min(t1.size(), t2.size());
  const int want = c.integer("bench_pairs", 1);
  if (want < 0) throw ConfigError("bench_pairs must be >= 0");
  const std::size_t n_pairs = want == 0 ? available : std::min<std::size_t>(available, static_cast<std::size_t>(want));
  std::vector<eval::TestPair> pairs;
  for (std::size_t k = 0; k < n_pairs; ++k) pairs.push_back({&t1[k]->data, &t2[k]->data});

  const auto rows = eval::benchmark(methods, pairs, snr_list(c), noise_list(c), c.seed(), detail::log);
  io::write_text(out / "bench.csv", eval::to_csv(rows));
  eval::write_gnuplot(rows, out);
  io::write_text(out / "bench.config", c.to_text());
  for (const auto& m : methods) {
    std::ostringstream os;
    os.precision(4);
    os << m.name << ": mean SI-SDR improvement " << std::fixed << eval::mean_improvement(rows, m.name) << " dB";
    detail::log(os.str());
  }
  return rows;
}

/// Maps a library error to the process exit code.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 3;
}

}  // namespace avsep::cli
