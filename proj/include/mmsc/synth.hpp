#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mmsc/io.hpp"
#include "mmsc/multimodal.hpp"
#include "mmsc/rng.hpp"
#include "mmsc/types.hpp"

namespace mmsc {

/// Shape and difficulty of a synthetic audio-video event dataset.
///
/// A ground-truth joint dictionary (unit-norm columns over the fused
/// [audio/sqrt(N_A) ; video/sqrt(N_V)] space) drives both modalities. Every
/// event owns `atoms_per_event` atoms; the rest are background atoms shared by
/// all clips. `modality_overlap` blends the audio block of an event's atoms
/// with those of a partner event (pairs 0-1, 2-3, ...) and the video block with
/// a different partner (pairs 1-2, 3-4, ...), so each modality alone confuses
/// some events that the other separates.
struct SynthConfig {
  int event_count = 5;
  int train_per_event = 10;
  int test_per_event = 100;
  int background_train = 10;
  int background_test = 100;
  int keyframes_per_clip = 3;
  int samples_per_keyframe = 4;
  int truth_atoms = 48;
  int atoms_per_event = 4;
  int active_event_atoms = 2;
  int active_background_atoms = 2;
  double activation_min = 0.5;
  double activation_max = 1.5;
  /// Relative per-sample jitter of the keyframe activation.
  double sample_jitter = 0.2;
  double modality_overlap = 0.9;
  bool disjoint_events = true;
  int audio_dim = 48;
  int video_dim = 128;
  double noise_sigma = 0.9;
  std::uint64_t seed = 1;

  int background_atoms() const { return truth_atoms - event_count * atoms_per_event; }

  void validate() const {
    auto req = [](bool c, const char* what) {
      if (!c) throw ConfigError(what);
    };
    req(event_count >= 1, "event_count must be >= 1");
    req(train_per_event >= 1 && test_per_event >= 0, "clip counts must be positive");
    req(background_train >= 0 && background_test >= 0, "background counts must be >= 0");
    req(keyframes_per_clip >= 1 && samples_per_keyframe >= 1, "keyframe and sample counts must be >= 1");
    req(atoms_per_event >= 1, "atoms_per_event must be >= 1");
    req(!disjoint_events || background_atoms() >= 0, "truth_atoms too small for disjoint event atoms");
    req(truth_atoms >= atoms_per_event, "truth_atoms must cover one event");
    req(active_event_atoms >= 1 && active_event_atoms <= atoms_per_event, "active_event_atoms out of range");
    req(active_background_atoms >= 0, "active_background_atoms must be >= 0");
    req(active_background_atoms == 0 || (disjoint_events ? background_atoms() : truth_atoms) >= active_background_atoms,
        "not enough background atoms");
    req(activation_min > 0.0 && activation_max >= activation_min, "invalid activation range");
    req(sample_jitter >= 0.0 && sample_jitter < 1.0, "sample_jitter must be in [0, 1)");
    req(modality_overlap >= 0.0 && modality_overlap <= 1.0, "modality_overlap must be in [0, 1]");
    req(audio_dim >= 1 && video_dim >= 1, "modality dims must be >= 1");
    req(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  }

  static SynthConfig from_kv(const io::KeyValues& kv) {
    SynthConfig c;
    c.event_count = static_cast<int>(kv.get_int_or("event_count", c.event_count));
    c.train_per_event = static_cast<int>(kv.get_int_or("train_per_event", c.train_per_event));
    c.test_per_event = static_cast<int>(kv.get_int_or("test_per_event", c.test_per_event));
    c.background_train = static_cast<int>(kv.get_int_or("background_train", c.background_train));
    c.background_test = static_cast<int>(kv.get_int_or("background_test", c.background_test));
    c.keyframes_per_clip = static_cast<int>(kv.get_int_or("keyframes_per_clip", c.keyframes_per_clip));
    c.samples_per_keyframe = static_cast<int>(kv.get_int_or("samples_per_keyframe", c.samples_per_keyframe));
    c.truth_atoms = static_cast<int>(kv.get_int_or("truth_atoms", c.truth_atoms));
    c.atoms_per_event = static_cast<int>(kv.get_int_or("atoms_per_event", c.atoms_per_event));
    c.active_event_atoms = static_cast<int>(kv.get_int_or("active_event_atoms", c.active_event_atoms));
    c.active_background_atoms = static_cast<int>(kv.get_int_or("active_background_atoms", c.active_background_atoms));
    c.activation_min = kv.get_double_or("activation_min", c.activation_min);
    c.activation_max = kv.get_double_or("activation_max", c.activation_max);
    c.sample_jitter = kv.get_double_or("sample_jitter", c.sample_jitter);
    c.modality_overlap = kv.get_double_or("modality_overlap", c.modality_overlap);
    c.disjoint_events = kv.get_int_or("disjoint_events", c.disjoint_events ? 1 : 0) != 0;
    c.audio_dim = static_cast<int>(kv.get_int_or("audio_dim", c.audio_dim));
    c.video_dim = static_cast<int>(kv.get_int_or("video_dim", c.video_dim));
    c.noise_sigma = kv.get_double_or("noise_sigma", c.noise_sigma);
    if (kv.has("seed")) c.seed = kv.get_u64("seed");
    return c;
  }

  void to_kv(io::KeyValues& kv) const {
    kv.set("event_count", event_count);
    kv.set("train_per_event", train_per_event);
    kv.set("test_per_event", test_per_event);
    kv.set("background_train", background_train);
    kv.set("background_test", background_test);
    kv.set("keyframes_per_clip", keyframes_per_clip);
    kv.set("samples_per_keyframe", samples_per_keyframe);
    kv.set("truth_atoms", truth_atoms);
    kv.set("atoms_per_event", atoms_per_event);
    kv.set("active_event_atoms", active_event_atoms);
    kv.set("active_background_atoms", active_background_atoms);
    kv.set("activation_min", activation_min);
    kv.set("activation_max", activation_max);
    kv.set("sample_jitter", sample_jitter);
    kv.set("modality_overlap", modality_overlap);
    kv.set("disjoint_events", disjoint_events ? 1 : 0);
    kv.set("audio_dim", audio_dim);
    kv.set("video_dim", video_dim);
    kv.set("noise_sigma", noise_sigma);
    kv.set("seed", seed);
  }
};

/// Event label of event index e: E001, E002, ...
inline std::string event_label(int e) {
  std::string s = std::to_string(e + 1);
  return "E" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

/// Ground truth drawn before any clip: the joint dictionary and which atoms
/// each event owns.
struct SynthTruth {
  Dictionary dictionary;  // fused space, (audio_dim + video_dim) x truth_atoms
  std::vector<std::vector<int>> event_atoms;
  std::vector<int> background_atoms;
};

inline SynthTruth synth_truth(const SynthConfig& cfg) {
  cfg.validate();
  const Rng root = Rng(cfg.seed).split("synth").split("truth");
  const int na = cfg.audio_dim, nv = cfg.video_dim;

  SynthTruth t;
  Rng pick = root.split("assignment");
  if (cfg.disjoint_events) {
    const auto perm = pick.permutation(static_cast<std::size_t>(cfg.truth_atoms));
    std::size_t p = 0;
    for (int e = 0; e < cfg.event_count; ++e) {
      std::vector<int> atoms;
      for (int j = 0; j < cfg.atoms_per_event; ++j) atoms.push_back(static_cast<int>(perm[p++]));
      t.event_atoms.push_back(atoms);
    }
    for (; p < perm.size(); ++p) t.background_atoms.push_back(static_cast<int>(perm[p]));
  } else {
    for (int e = 0; e < cfg.event_count; ++e) {
      const auto perm = pick.permutation(static_cast<std::size_t>(cfg.truth_atoms));
      std::vector<int> atoms;
      for (int j = 0; j < cfg.atoms_per_event; ++j) atoms.push_back(static_cast<int>(perm[static_cast<std::size_t>(j)]));
      t.event_atoms.push_back(atoms);
    }
    for (int k = 0; k < cfg.truth_atoms; ++k) t.background_atoms.push_back(k);
  }

  // Per-dimension unit-variance modality blocks.
  Rng draw = root.split("atoms");
  Matrix audio(na, cfg.truth_atoms), video(nv, cfg.truth_atoms);
  for (int k = 0; k < cfg.truth_atoms; ++k) {
    for (int i = 0; i < na; ++i) audio(i, k) = draw.normal();
    for (int i = 0; i < nv; ++i) video(i, k) = draw.normal();
  }
  if (cfg.disjoint_events && cfg.modality_overlap > 0.0) {
    // Partner events share a component in one modality: audio pairs (0,1),
    // (2,3), ...; video pairs (1,2), (3,4), ...
    const double rho = cfg.modality_overlap;
    const double own = std::sqrt(1.0 - rho * rho);
    Rng shared = root.split("shared");
    for (int e = 0; e < cfg.event_count; ++e) {
      const int pa = e ^ 1;
      if (e % 2 == 0 && pa < cfg.event_count) {
        for (int j = 0; j < cfg.atoms_per_event; ++j) {
          Vector s(na);
          for (int i = 0; i < na; ++i) s[i] = shared.normal();
          const int a = t.event_atoms[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)];
          const int b = t.event_atoms[static_cast<std::size_t>(pa)][static_cast<std::size_t>(j)];
          audio.col(a) = own * audio.col(a) + rho * s;
          audio.col(b) = own * audio.col(b) + rho * s;
        }
      }
      const int pv = e + 1;
      if (e % 2 == 1 && pv < cfg.event_count) {
        for (int j = 0; j < cfg.atoms_per_event; ++j) {
          Vector s(nv);
          for (int i = 0; i < nv; ++i) s[i] = shared.normal();
          const int a = t.event_atoms[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)];
          const int b = t.event_atoms[static_cast<std::size_t>(pv)][static_cast<std::size_t>(j)];
          video.col(a) = own * video.col(a) + rho * s;
          video.col(b) = own * video.col(b) + rho * s;
        }
      }
    }
  }
  Matrix fused(na + nv, cfg.truth_atoms);
  fused.topRows(na) = audio / std::sqrt(static_cast<double>(na));
  fused.bottomRows(nv) = video / std::sqrt(static_cast<double>(nv));
  t.dictionary = Dictionary(Dictionary::normalized_from(std::move(fused)).atoms(), true, ModalityDims{na, nv});
  return t;
}

/// One clip's samples; rows grouped by keyframe.
struct SynthClip {
  std::string clip_id;
  std::string label;
  FeatureMatrix audio;
  FeatureMatrix video;
  FeatureMatrix activations;
};

/// Draws one clip. `event` < 0 makes a background clip.
inline SynthClip synth_clip(const SynthConfig& cfg, const SynthTruth& truth, const std::string& clip_id, int event) {
  Rng rng = Rng(cfg.seed).split("synth").split("clip").split(clip_id);
  const int rows = cfg.keyframes_per_clip * cfg.samples_per_keyframe;
  const int na = cfg.audio_dim, nv = cfg.video_dim;
  SynthClip c;
  c.clip_id = clip_id;
  c.label = event < 0 ? io::kBackgroundLabel : event_label(event);
  c.audio.resize(rows, na);
  c.video.resize(rows, nv);
  c.activations = FeatureMatrix::Zero(rows, cfg.truth_atoms);
  const Matrix& d = truth.dictionary.atoms();
  const double sa = std::sqrt(static_cast<double>(na)), sv = std::sqrt(static_cast<double>(nv));

  for (int kf = 0; kf < cfg.keyframes_per_clip; ++kf) {
    Vector base = Vector::Zero(cfg.truth_atoms);
    if (event >= 0) {
      const auto& own = truth.event_atoms[static_cast<std::size_t>(event)];
      const auto perm = rng.permutation(own.size());
      for (int j = 0; j < cfg.active_event_atoms; ++j) {
        base[own[perm[static_cast<std::size_t>(j)]]] += rng.uniform(cfg.activation_min, cfg.activation_max);
      }
    }
    const auto& bg = truth.background_atoms;
    const int n_bg = event < 0 ? cfg.active_background_atoms + cfg.active_event_atoms : cfg.active_background_atoms;
    if (!bg.empty() && n_bg > 0) {
      const auto perm = rng.permutation(bg.size());
      for (int j = 0; j < n_bg && j < static_cast<int>(bg.size()); ++j) {
        base[bg[perm[static_cast<std::size_t>(j)]]] += rng.uniform(cfg.activation_min, cfg.activation_max);
      }
    }
    for (int s = 0; s < cfg.samples_per_keyframe; ++s) {
      const int r = kf * cfg.samples_per_keyframe + s;
      Vector act = base;
      for (Eigen::Index k = 0; k < act.size(); ++k) {
        if (act[k] != 0.0) act[k] *= 1.0 + cfg.sample_jitter * rng.uniform(-1.0, 1.0);
      }
      const Vector fused = d * act;
      c.activations.row(r) = act.transpose();
      for (int i = 0; i < na; ++i) c.audio(r, i) = sa * fused[i] + cfg.noise_sigma * rng.normal();
      for (int i = 0; i < nv; ++i) c.video(r, i) = sv * fused[na + i] + cfg.noise_sigma * rng.normal();
    }
  }
  return c;
}

/// Writes a full dataset under `dir`:
///   manifest_train.tsv, manifest_test.tsv, clips/*.scmx,
///   truth/dictionary.scmx, truth/event_atoms.tsv, truth/activations/*.scmx,
///   demo/frames.scmx, demo/audio.f32, synth.meta
inline void synth_generate(const SynthConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const SynthTruth truth = synth_truth(cfg);
  fs::create_directories(dir / "clips");
  fs::create_directories(dir / "truth" / "activations");

  io::save_matrix(dir / "truth" / "dictionary.scmx", truth.dictionary.atoms());
  {
    std::string text = "# event\tatom indices (columns of dictionary.scmx)\n";
    for (int e = 0; e < cfg.event_count; ++e) {
      text += event_label(e) + "\t";
      for (std::size_t j = 0; j < truth.event_atoms[static_cast<std::size_t>(e)].size(); ++j) {
        text += (j ? "," : "") + std::to_string(truth.event_atoms[static_cast<std::size_t>(e)][j]);
      }
      text += "\n";
    }
    text += std::string(io::kBackgroundLabel) + "\t";
    for (std::size_t j = 0; j < truth.background_atoms.size(); ++j) text += (j ? "," : "") + std::to_string(truth.background_atoms[j]);
    text += "\n";
    io::write_file(dir / "truth" / "event_atoms.tsv", text);
  }

  auto emit = [&](const std::string& split, int per_event, int background) {
    std::string manifest = "# clip_id\tevent_label\taudio_path\tvideo_path\tkeyframe_count\n";
    auto one = [&](const std::string& id, int event) {
      const SynthClip c = synth_clip(cfg, truth, id, event);
      const std::string a = "clips/" + id + ".audio.scmx", v = "clips/" + id + ".video.scmx";
      io::save_matrix(dir / a, c.audio);
      io::save_matrix(dir / v, c.video);
      io::save_matrix(dir / "truth" / "activations" / (id + ".scmx"), c.activations);
      manifest += id + "\t" + c.label + "\t" + a + "\t" + v + "\t" + std::to_string(cfg.keyframes_per_clip) + "\n";
    };
    for (int e = 0; e < cfg.event_count; ++e) {
      for (int i = 0; i < per_event; ++i) one(split + "-" + event_label(e) + "-" + std::to_string(i), e);
    }
    for (int i = 0; i < background; ++i) one(split + "-bg-" + std::to_string(i), -1);
    io::write_file(dir / ("manifest_" + split + ".tsv"), manifest);
  };
  emit("train", cfg.train_per_event, cfg.background_train);
  emit("test", cfg.test_per_event, cfg.background_test);

  // Small raw inputs for the keyframes / audio-features commands: 60 frames of
  // 64-bin histograms with a cut at frame 30 and a near-blank cut at frame 45,
  // and two seconds of a 440 Hz tone at 22050 Hz.
  {
    Rng rng = Rng(cfg.seed).split("synth").split("demo");
    FeatureMatrix frames = FeatureMatrix::Zero(60, 64);
    for (int f = 0; f < 60; ++f) {
      for (int b = 0; b < 64; ++b) {
        double v = 0.0;
        if (f < 30) v = b < 32 ? 100.0 + 5.0 * rng.uniform() : 0.0;
        else if (f < 45) v = b >= 16 ? 80.0 + 5.0 * rng.uniform() : 0.0;
        else v = b < 2 ? 1000.0 : 0.0;
        frames(f, b) = std::round(v);
      }
    }
    io::save_matrix(dir / "demo" / "frames.scmx", frames);
    Vector tone(2 * 22050);
    for (Eigen::Index i = 0; i < tone.size(); ++i) tone[i] = 0.3 * std::sin(2.0 * std::numbers::pi * 440.0 * i / 22050.0);
    io::save_pcm_f32(dir / "demo" / "audio.f32", tone);
    io::KeyValues rate;
    rate.set("sample_rate_hz", 22050);
    rate.set("channels", 1);
    rate.save(dir / "demo" / "audio.meta");
  }

  io::KeyValues meta;
  cfg.to_kv(meta);
  meta.set("stage", std::string("synth"));
  meta.save(dir / "synth.meta");
}

}  // namespace mmsc
