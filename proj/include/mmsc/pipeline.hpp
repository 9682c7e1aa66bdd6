#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mmsc/classify.hpp"
#include "mmsc/dictionary_learning.hpp"
#include "mmsc/eval.hpp"
#include "mmsc/features.hpp"
#include "mmsc/gmm.hpp"
#include "mmsc/io.hpp"
#include "mmsc/media_frontend.hpp"
#include "mmsc/multimodal.hpp"
#include "mmsc/synth.hpp"

namespace mmsc::pipeline {

namespace fs = std::filesystem;

/// Everything a pipeline run depends on. Loaded from "key=value" config files;
/// the synthetic-data keys are those of SynthConfig.
struct PipelineConfig {
  SynthConfig synth;
  /// Dataset directory; empty means <out>/data (written by `synth`).
  std::string data_dir;
  Eigen::Index atoms = 64;
  /// Unimodal lambda, also the cross-modal lambda''.
  double lambda = 4.0;
  /// Joint lambda'; negative derives it as (1/N_A + 1/N_V) lambda.
  double lambda_joint = -1.0;
  int epochs = 50;
  double objective_tol = 1e-6;
  int dead_usage_threshold = 0;
  double solver_tol = 1e-8;
  int solver_max_iter = 1000;
  double whiten_eps = 1e-5;
  /// 0 keeps every input dimension.
  int audio_whiten_dim = 0;
  int video_whiten_dim = 128;
  /// 0 disables the GMM baseline.
  int gmm_mixtures = 64;
  double gmm_sparsity = 0.1;
  int gmm_max_iter = 50;
  std::vector<double> c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
  int folds = 5;

  std::uint64_t seed() const { return synth.seed; }

  static PipelineConfig from_kv(const io::KeyValues& kv) {
    static const std::set<std::string> own{"data_dir",      "atoms",           "lambda",         "lambda_joint",
                                           "epochs",        "objective_tol",   "dead_usage_threshold",
                                           "solver_tol",    "solver_max_iter", "whiten_eps",     "audio_whiten_dim",
                                           "video_whiten_dim", "gmm_mixtures", "gmm_sparsity",   "gmm_max_iter",
                                           "c_grid",        "folds"};
    io::KeyValues synth_defaults;
    SynthConfig{}.to_kv(synth_defaults);
    for (const auto& [k, v] : kv.items()) {
      if (!own.count(k) && !synth_defaults.has(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    PipelineConfig c;
    try {
      c.synth = SynthConfig::from_kv(kv);
      c.data_dir = kv.get_or("data_dir", "");
      c.atoms = kv.get_int_or("atoms", c.atoms);
      c.lambda = kv.get_double_or("lambda", c.lambda);
      c.lambda_joint = kv.get_double_or("lambda_joint", c.lambda_joint);
      c.epochs = static_cast<int>(kv.get_int_or("epochs", c.epochs));
      c.objective_tol = kv.get_double_or("objective_tol", c.objective_tol);
      c.dead_usage_threshold = static_cast<int>(kv.get_int_or("dead_usage_threshold", c.dead_usage_threshold));
      c.solver_tol = kv.get_double_or("solver_tol", c.solver_tol);
      c.solver_max_iter = static_cast<int>(kv.get_int_or("solver_max_iter", c.solver_max_iter));
      c.whiten_eps = kv.get_double_or("whiten_eps", c.whiten_eps);
      c.audio_whiten_dim = static_cast<int>(kv.get_int_or("audio_whiten_dim", c.audio_whiten_dim));
      c.video_whiten_dim = static_cast<int>(kv.get_int_or("video_whiten_dim", c.video_whiten_dim));
      c.gmm_mixtures = static_cast<int>(kv.get_int_or("gmm_mixtures", c.gmm_mixtures));
      c.gmm_sparsity = kv.get_double_or("gmm_sparsity", c.gmm_sparsity);
      c.gmm_max_iter = static_cast<int>(kv.get_int_or("gmm_max_iter", c.gmm_max_iter));
      c.folds = static_cast<int>(kv.get_int_or("folds", c.folds));
      if (kv.has("c_grid")) {
        c.c_grid.clear();
        std::stringstream ss(kv.get("c_grid"));
        std::string item;
        while (std::getline(ss, item, ',')) c.c_grid.push_back(std::stod(item));
      }
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    } catch (const std::logic_error& e) {
      throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
  }

  static PipelineConfig load(const fs::path& path) { return from_kv(io::KeyValues::load(path)); }

  void validate() const {
    synth.validate();
    auto req = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(what);
    };
    req(atoms >= 1, "atoms must be >= 1");
    req(lambda >= 0.0, "lambda must be >= 0");
    req(epochs >= 1, "epochs must be >= 1");
    req(solver_tol > 0.0 && solver_max_iter >= 1, "invalid solver settings");
    req(whiten_eps >= 0.0, "whiten_eps must be >= 0");
    req(audio_whiten_dim >= 0 && video_whiten_dim >= 0, "whitening dims must be >= 0");
    req(gmm_mixtures >= 0 && gmm_sparsity > 0.0 && gmm_sparsity <= 1.0, "invalid GMM settings");
    req(!c_grid.empty(), "c_grid must not be empty");
    for (double c : c_grid) req(c > 0.0, "c_grid values must be positive");
    req(folds >= 2, "folds must be >= 2");
  }

  io::KeyValues to_kv() const {
    io::KeyValues kv;
    synth.to_kv(kv);
    kv.set("data_dir", data_dir);
    kv.set("atoms", static_cast<long long>(atoms));
    kv.set("lambda", lambda);
    kv.set("lambda_joint", lambda_joint);
    kv.set("epochs", epochs);
    kv.set("objective_tol", objective_tol);
    kv.set("dead_usage_threshold", dead_usage_threshold);
    kv.set("solver_tol", solver_tol);
    kv.set("solver_max_iter", solver_max_iter);
    kv.set("whiten_eps", whiten_eps);
    kv.set("audio_whiten_dim", audio_whiten_dim);
    kv.set("video_whiten_dim", video_whiten_dim);
    kv.set("gmm_mixtures", gmm_mixtures);
    kv.set("gmm_sparsity", gmm_sparsity);
    kv.set("gmm_max_iter", gmm_max_iter);
    std::string grid;
    for (std::size_t i = 0; i < c_grid.size(); ++i) {
      std::ostringstream ss;
      ss.precision(17);
      ss << c_grid[i];
      grid += (i ? "," : "") + ss.str();
    }
    kv.set("c_grid", grid);
    kv.set("folds", folds);
    return kv;
  }

  std::string digest() const { return io::sha256_hex(to_kv().str()); }
};

inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order{"synth", "whiten", "learn-dict", "encode", "pool", "train", "eval"};
  return order;
}

/// Per-sample code variants produced by `encode`.
inline std::vector<std::string> code_variants(const PipelineConfig& cfg) {
  std::vector<std::string> v{"audio", "video", "joint", "cross-audio", "cross-video"};
  if (cfg.gmm_mixtures > 0) v.insert(v.end(), {"gmm-audio", "gmm-video", "gmm-joint"});
  return v;
}

/// Clip-level descriptors evaluated by `train` / `eval`, with their parts.
inline std::vector<std::pair<std::string, std::vector<std::string>>> descriptor_variants(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<std::string>>> v{
      {"audio", {"audio"}},
      {"video", {"video"}},
      {"union", {"audio", "video"}},
      {"cross-audio", {"cross-audio"}},
      {"cross-video", {"cross-video"}},
      {"joint", {"joint"}},
      {"cross-union", {"cross-audio", "cross-video"}},
  };
  if (cfg.gmm_mixtures > 0) {
    v.push_back({"gmm-union", {"gmm-audio", "gmm-video"}});
    v.push_back({"gmm-joint", {"gmm-joint"}});
  }
  return v;
}

/// Where a stage reads and writes.
class Workspace {
 public:
  Workspace(fs::path out, PipelineConfig cfg) : out_(std::move(out)), cfg_(std::move(cfg)) {}

  const fs::path& out() const { return out_; }
  const PipelineConfig& config() const { return cfg_; }
  fs::path data_dir() const { return cfg_.data_dir.empty() ? out_ / "data" : fs::path(cfg_.data_dir); }
  fs::path stage_dir(const std::string& stage) const { return stage == "synth" ? data_dir() : out_ / stage; }
  fs::path manifest_path(const std::string& split) const { return data_dir() / ("manifest_" + split + ".tsv"); }

  /// Digest over both manifests; embedded in every artifact.
  std::string manifest_digest() const {
    for (const char* split : {"train", "test"}) {
      if (!fs::exists(manifest_path(split))) {
        throw StageOrderError("missing " + manifest_path(split).string() + ": run `synth` first (or set data_dir)");
      }
    }
    return io::sha256_hex(io::read_file(manifest_path("train")) + io::read_file(manifest_path("test")));
  }

  /// Throws StageOrderError naming the stage to run if `stage` has not
  /// completed.
  void require_stage(const std::string& stage) const {
    if (stage == "synth") {
      manifest_digest();
      return;
    }
    if (!fs::exists(stage_dir(stage) / "stage.meta")) {
      throw StageOrderError("missing upstream artifact " + (stage_dir(stage) / "stage.meta").string() + ": run `" +
                            stage + "` first");
    }
  }

  void require_upstream_of(const std::string& stage) const {
    const auto& order = stage_order();
    const auto it = std::find(order.begin(), order.end(), stage);
    if (it != order.begin() && it != order.end()) require_stage(*(it - 1));
  }

  io::KeyValues provenance(const std::string& stage) const {
    io::KeyValues kv;
    kv.set("stage", stage);
    kv.set("seed", cfg_.seed());
    kv.set("config_digest", cfg_.digest());
    kv.set("manifest_digest", manifest_digest());
    return kv;
  }

  /// Saves a matrix artifact with a provenance sidecar "<file>.meta".
  void save(const std::string& stage, const std::string& name, const FeatureMatrix& m,
            const io::KeyValues& extra = {}) {
    const fs::path p = stage_dir(stage) / name;
    io::save_matrix(p, m);
    io::KeyValues meta = provenance(stage);
    for (const auto& [k, v] : extra.items()) meta.set(k, v);
    meta.set("rows", static_cast<long long>(m.rows()));
    meta.set("cols", static_cast<long long>(m.cols()));
    meta.save(p.string() + ".meta");
    written_[stage].push_back(name);
  }

  void save_text(const std::string& stage, const std::string& name, const std::string& text) {
    io::write_file(stage_dir(stage) / name, text);
    written_[stage].push_back(name);
  }

  /// Marks a stage complete: config, provenance and artifact digests.
  void finish(const std::string& stage) {
    io::KeyValues kv = provenance(stage);
    const io::KeyValues config = cfg_.to_kv();
    for (const auto& [k, v] : config.items()) kv.set("config." + k, v);
    for (const auto& name : written_[stage]) kv.set("artifact." + name, io::file_digest(stage_dir(stage) / name));
    kv.save(stage_dir(stage) / "stage.meta");
  }

  FeatureMatrix load(const std::string& stage, const std::string& name) const {
    const fs::path p = stage_dir(stage) / name;
    if (!fs::exists(p)) throw StageOrderError("missing artifact " + p.string() + ": run `" + stage + "` first");
    return io::load_matrix(p);
  }

 private:
  fs::path out_;
  PipelineConfig cfg_;
  std::map<std::string, std::vector<std::string>> written_;
};

/// Per-clip row ranges within a split's stacked sample matrices.
struct ClipIndex {
  struct Entry {
    std::string clip_id;
    std::string label;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    int keyframes = 1;
  };
  std::vector<Entry> entries;

  Eigen::Index total_rows() const { return entries.empty() ? 0 : entries.back().offset + entries.back().rows; }

  std::string str() const {
    std::string s = "# clip_id\tlabel\trow_offset\trows\tkeyframes\n";
    for (const auto& e : entries) {
      s += e.clip_id + "\t" + e.label + "\t" + std::to_string(e.offset) + "\t" + std::to_string(e.rows) + "\t" +
           std::to_string(e.keyframes) + "\n";
    }
    return s;
  }

  static ClipIndex parse(const std::string& text, const std::string& origin) {
    ClipIndex idx;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      Entry e;
      if (!(std::getline(ls, e.clip_id, '\t') && std::getline(ls, e.label, '\t') && (ls >> e.offset >> e.rows >> e.keyframes))) {
        throw FormatError(origin + ": malformed index line");
      }
      idx.entries.push_back(e);
    }
    return idx;
  }
};

inline const std::vector<std::string>& splits() {
  static const std::vector<std::string> s{"train", "test"};
  return s;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline void run_synth(Workspace& ws) {
  synth_generate(ws.config().synth, ws.data_dir());
}

inline void run_whiten(Workspace& ws) {
  ws.require_upstream_of("whiten");
  const PipelineConfig& cfg = ws.config();

  std::map<std::string, std::pair<FeatureMatrix, FeatureMatrix>> raw;
  std::map<std::string, ClipIndex> index;
  for (const auto& split : splits()) {
    const io::DatasetManifest m = io::load_manifest(ws.manifest_path(split));
    std::vector<FeatureMatrix> audio, video;
    ClipIndex idx;
    Eigen::Index offset = 0, a_cols = -1, v_cols = -1;
    for (const auto& r : m.records) {
      audio.push_back(io::load_matrix(r.audio_path));
      video.push_back(io::load_matrix(r.video_path));
      const auto& a = audio.back();
      const auto& v = video.back();
      if (a.rows() != v.rows() || a.rows() == 0) throw FormatError(r.clip_id + ": audio and video sample counts differ or are empty");
      if (a.rows() % r.keyframe_count != 0) throw FormatError(r.clip_id + ": samples not divisible by keyframe_count");
      if (a_cols < 0) { a_cols = a.cols(); v_cols = v.cols(); }
      if (a.cols() != a_cols || v.cols() != v_cols) throw FormatError(r.clip_id + ": inconsistent feature dimension");
      idx.entries.push_back({r.clip_id, r.event_label, offset, a.rows(), r.keyframe_count});
      offset += a.rows();
    }
    FeatureMatrix sa(offset, std::max<Eigen::Index>(a_cols, 0)), sv(offset, std::max<Eigen::Index>(v_cols, 0));
    for (std::size_t i = 0; i < audio.size(); ++i) {
      sa.middleRows(idx.entries[i].offset, idx.entries[i].rows) = audio[i];
      sv.middleRows(idx.entries[i].offset, idx.entries[i].rows) = video[i];
    }
    raw[split] = {std::move(sa), std::move(sv)};
    index[split] = std::move(idx);
  }

  const FeatureMatrix& ta = raw["train"].first;
  const FeatureMatrix& tv = raw["train"].second;
  if (ta.rows() < 2) throw InputError("whiten: need at least two training samples");
  auto dim_for = [](int requested, Eigen::Index n, Eigen::Index m) {
    const Eigen::Index cap = std::min(n, m - 1);
    return requested > 0 ? std::min<Eigen::Index>(requested, cap) : cap;
  };
  for (const char* modality : {"audio", "video"}) {
    const bool is_audio = std::string(modality) == "audio";
    const FeatureMatrix& train = is_audio ? ta : tv;
    const WhiteningTransform w =
        fit_whitening(train, dim_for(is_audio ? cfg.audio_whiten_dim : cfg.video_whiten_dim, train.cols(), train.rows()),
                      cfg.whiten_eps);
    io::KeyValues meta;
    meta.set("input_dim", static_cast<long long>(w.input_dim()));
    meta.set("out_dim", static_cast<long long>(w.out_dim()));
    meta.set("eps", w.epsilon);
    ws.save("whiten", std::string(modality) + ".mean.scmx", FeatureMatrix(w.mean.transpose()), meta);
    ws.save("whiten", std::string(modality) + ".basis.scmx", FeatureMatrix(w.basis), meta);
    ws.save("whiten", std::string(modality) + ".scales.scmx", FeatureMatrix(w.scales.transpose()), meta);
    ws.save("whiten", std::string(modality) + ".eigenvalues.scmx", FeatureMatrix(w.eigenvalues.transpose()), meta);

    // Apply the transform as persisted so later runs see identical numbers.
    WhiteningTransform stored;
    stored.mean = ws.load("whiten", std::string(modality) + ".mean.scmx").row(0).transpose();
    stored.basis = ws.load("whiten", std::string(modality) + ".basis.scmx");
    stored.scales = ws.load("whiten", std::string(modality) + ".scales.scmx").row(0).transpose();
    stored.epsilon = w.epsilon;
    for (const auto& split : splits()) {
      const FeatureMatrix& x = is_audio ? raw[split].first : raw[split].second;
      ws.save("whiten", split + "." + modality + ".scmx", apply_whitening_rows(stored, x));
    }
  }
  for (const auto& split : splits()) ws.save_text("whiten", split + ".index.tsv", index[split].str());
  ws.finish("whiten");
}

inline ClipIndex load_index(const Workspace& ws, const std::string& split) {
  const fs::path p = ws.stage_dir("whiten") / (split + ".index.tsv");
  if (!fs::exists(p)) throw StageOrderError("missing " + p.string() + ": run `whiten` first");
  return ClipIndex::parse(io::read_file(p), p.string());
}

inline double joint_lambda(const PipelineConfig& cfg, ModalityDims dims) {
  return cfg.lambda_joint >= 0.0 ? cfg.lambda_joint : lambda_joint_of(cfg.lambda, dims);
}

inline void save_gmm(Workspace& ws, const std::string& name, const GaussianMixture& g) {
  io::KeyValues meta;
  meta.set("variance_floor", g.variance_floor);
  ws.save("learn-dict", name + ".weights.scmx", FeatureMatrix(g.weights.transpose()), meta);
  ws.save("learn-dict", name + ".means.scmx", FeatureMatrix(g.means), meta);
  ws.save("learn-dict", name + ".variances.scmx", FeatureMatrix(g.variances), meta);
}

inline GaussianMixture load_gmm(const Workspace& ws, const std::string& name) {
  GaussianMixture g;
  g.weights = ws.load("learn-dict", name + ".weights.scmx").row(0).transpose();
  g.weights /= g.weights.sum();
  g.means = ws.load("learn-dict", name + ".means.scmx");
  g.variances = ws.load("learn-dict", name + ".variances.scmx");
  g.variance_floor = io::KeyValues::load((ws.stage_dir("learn-dict") / (name + ".weights.scmx.meta"))).get_double("variance_floor");
  return g;
}

inline void run_learn_dict(Workspace& ws) {
  ws.require_upstream_of("learn-dict");
  const PipelineConfig& cfg = ws.config();
  const FeatureMatrix audio = ws.load("whiten", "train.audio.scmx");
  const FeatureMatrix video = ws.load("whiten", "train.video.scmx");
  const ModalityDims dims{audio.cols(), video.cols()};
  const Rng root = Rng(cfg.seed()).split("learn-dict");

  auto learn_cfg = [&](double lambda, const char* tag) {
    LearnConfig lc;
    lc.atom_count = cfg.atoms;
    lc.lambda = lambda;
    lc.epochs = cfg.epochs;
    lc.objective_tol = cfg.objective_tol;
    lc.dead_usage_threshold = cfg.dead_usage_threshold;
    lc.solver_tol = cfg.solver_tol;
    lc.solver_max_iter = cfg.solver_max_iter;
    lc.seed = root.split(tag).seed();
    return lc;
  };
  auto stats_meta = [](const TrainStats& s, double lambda) {
    io::KeyValues kv;
    kv.set("lambda", lambda);
    kv.set("epochs_run", static_cast<long long>(s.objective_per_epoch.size()));
    kv.set("final_objective", s.objective_per_epoch.empty() ? 0.0 : s.objective_per_epoch.back());
    kv.set("atoms_replaced", s.atoms_replaced);
    kv.set("converged", s.converged ? 1 : 0);
    return kv;
  };

  const auto ra = learn_dictionary(audio, learn_cfg(cfg.lambda, "audio"));
  ws.save("learn-dict", "audio.scmx", FeatureMatrix(ra.dictionary.atoms()), stats_meta(ra.stats, cfg.lambda));
  const auto rv = learn_dictionary(video, learn_cfg(cfg.lambda, "video"));
  ws.save("learn-dict", "video.scmx", FeatureMatrix(rv.dictionary.atoms()), stats_meta(rv.stats, cfg.lambda));
  const double lj = joint_lambda(cfg, dims);
  const auto rj = learn_joint(audio, video, learn_cfg(lj, "joint"));
  io::KeyValues jm = stats_meta(rj.stats, lj);
  jm.set("audio_dim", static_cast<long long>(dims.audio));
  jm.set("video_dim", static_cast<long long>(dims.video));
  jm.set("lambda_cross", cfg.lambda);
  ws.save("learn-dict", "joint.scmx", FeatureMatrix(rj.dictionary.inner.atoms()), jm);

  if (cfg.gmm_mixtures > 0) {
    auto gcfg = [&](const char* tag) {
      GmmFitConfig g;
      g.mixtures = cfg.gmm_mixtures;
      g.max_iter = cfg.gmm_max_iter;
      g.seed = root.split(tag).seed();
      return g;
    };
    save_gmm(ws, "gmm-audio", fit_gmm_em(audio, gcfg("gmm-audio")));
    save_gmm(ws, "gmm-video", fit_gmm_em(video, gcfg("gmm-video")));
    save_gmm(ws, "gmm-joint", fit_gmm_em(fuse_rows(audio, video), gcfg("gmm-joint")));
  }
  ws.finish("learn-dict");
}

inline void run_encode(Workspace& ws) {
  ws.require_upstream_of("encode");
  const PipelineConfig& cfg = ws.config();
  const Dictionary da = Dictionary::normalized_from(ws.load("learn-dict", "audio.scmx"));
  const Dictionary dv = Dictionary::normalized_from(ws.load("learn-dict", "video.scmx"));
  const Dictionary dj_raw = Dictionary::normalized_from(ws.load("learn-dict", "joint.scmx"));
  const ModalityDims dims{da.input_dim(), dv.input_dim()};
  const Dictionary dj(dj_raw.atoms(), true, dims);
  const auto [dja, djv] = split_joint(dj);
  const double lj = joint_lambda(cfg, dims);
  auto solver = [&](double lambda) { return SolverConfig{lambda, cfg.solver_tol, cfg.solver_max_iter}; };

  for (const auto& split : splits()) {
    const FeatureMatrix audio = ws.load("whiten", split + ".audio.scmx");
    const FeatureMatrix video = ws.load("whiten", split + ".video.scmx");
    ws.save("encode", split + ".audio.scmx", encode_rows(audio, da, solver(cfg.lambda)));
    ws.save("encode", split + ".video.scmx", encode_rows(video, dv, solver(cfg.lambda)));
    ws.save("encode", split + ".joint.scmx", encode_rows(fuse_rows(audio, video), dj, solver(lj)));
    ws.save("encode", split + ".cross-audio.scmx", encode_rows(audio, dja, solver(cfg.lambda)));
    ws.save("encode", split + ".cross-video.scmx", encode_rows(video, djv, solver(cfg.lambda)));
    if (cfg.gmm_mixtures > 0) {
      auto post = [&](const GaussianMixture& g, const FeatureMatrix& x) {
        FeatureMatrix out(x.rows(), g.components());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          const Vector p = posteriors(g, x.row(i).transpose());
          out.row(i) = (cfg.gmm_sparsity < 1.0 ? truncate_posteriors(p, cfg.gmm_sparsity) : p).transpose();
        }
        return out;
      };
      ws.save("encode", split + ".gmm-audio.scmx", post(load_gmm(ws, "gmm-audio"), audio));
      ws.save("encode", split + ".gmm-video.scmx", post(load_gmm(ws, "gmm-video"), video));
      ws.save("encode", split + ".gmm-joint.scmx", post(load_gmm(ws, "gmm-joint"), fuse_rows(audio, video)));
    }
  }
  ws.finish("encode");
}

/// Two-stage max pooling of one clip's sample codes.
inline Vector pool_entry(const FeatureMatrix& codes, const ClipIndex::Entry& e) {
  const Eigen::Index per = e.rows / e.keyframes;
  std::vector<FeatureMatrix> groups;
  for (int k = 0; k < e.keyframes; ++k) groups.emplace_back(codes.middleRows(e.offset + k * per, per));
  return pool_clip(std::span<const FeatureMatrix>(groups));
}

inline void run_pool(Workspace& ws) {
  ws.require_upstream_of("pool");
  const PipelineConfig& cfg = ws.config();
  for (const auto& split : splits()) {
    const ClipIndex idx = load_index(ws, split);
    const auto n = static_cast<Eigen::Index>(idx.entries.size());
    std::map<std::string, FeatureMatrix> pooled;
    for (const auto& variant : code_variants(cfg)) {
      const FeatureMatrix codes = ws.load("encode", split + "." + variant + ".scmx");
      if (codes.rows() != idx.total_rows()) throw FormatError("encode/" + split + "." + variant + ": row count does not match index");
      FeatureMatrix out(n, codes.cols());
      for (Eigen::Index i = 0; i < n; ++i) out.row(i) = pool_entry(codes, idx.entries[static_cast<std::size_t>(i)]).transpose();
      pooled[variant] = std::move(out);
    }
    for (const auto& [name, parts] : descriptor_variants(cfg)) {
      Eigen::Index cols = 0;
      for (const auto& p : parts) cols += pooled[p].cols();
      FeatureMatrix out(n, cols);
      Eigen::Index at = 0;
      for (const auto& p : parts) {
        out.middleCols(at, pooled[p].cols()) = pooled[p];
        at += pooled[p].cols();
      }
      io::KeyValues meta;
      meta.set("tag", name);
      ws.save("pool", split + "." + name + ".scmx", out, meta);
    }
    std::string clips = "# clip_id\tlabel\n";
    for (const auto& e : idx.entries) clips += e.clip_id + "\t" + e.label + "\n";
    ws.save_text("pool", split + ".clips.tsv", clips);
  }
  ws.finish("pool");
}

inline std::vector<std::string> event_labels_of(const ClipIndex& idx) {
  std::set<std::string> s;
  for (const auto& e : idx.entries) {
    if (e.label != io::kBackgroundLabel) s.insert(e.label);
  }
  return {s.begin(), s.end()};
}

inline void run_train(Workspace& ws) {
  ws.require_upstream_of("train");
  const PipelineConfig& cfg = ws.config();
  const ClipIndex idx = load_index(ws, "train");
  std::vector<std::string> labels;
  for (const auto& e : idx.entries) labels.push_back(e.label);
  const auto events = event_labels_of(idx);
  if (events.empty()) throw InputError("train: no event clips in the training split");
  const Rng root = Rng(cfg.seed()).split("train");

  for (const auto& [name, parts] : descriptor_variants(cfg)) {
    const FeatureMatrix x = ws.load("pool", "train." + name + ".scmx");
    std::vector<CvResult> cv;
    const EventModel em = train_event_model(x, labels, events, cfg.c_grid, cfg.folds, root.split(name).seed(), &cv);
    FeatureMatrix w(static_cast<Eigen::Index>(em.models.size()), x.cols());
    io::KeyValues meta;
    meta.set("events", static_cast<long long>(em.models.size()));
    for (std::size_t e = 0; e < em.models.size(); ++e) {
      w.row(static_cast<Eigen::Index>(e)) = em.models[e].weights.transpose();
      const std::string p = "event." + std::to_string(e);
      meta.set(p + ".id", em.event_ids[e]);
      meta.set(p + ".bias", em.models[e].bias);
      meta.set(p + ".c", em.models[e].c);
      meta.set(p + ".cv_accuracy", *std::max_element(cv[e].mean_accuracy.begin(), cv[e].mean_accuracy.end()));
      meta.set(p + ".folds", cv[e].folds_used);
    }
    ws.save("train", name + ".weights.scmx", w, meta);
  }
  ws.finish("train");
}

inline EventModel load_event_model(const Workspace& ws, const std::string& name) {
  const FeatureMatrix w = ws.load("train", name + ".weights.scmx");
  const io::KeyValues meta = io::KeyValues::load(ws.stage_dir("train") / (name + ".weights.scmx.meta"));
  EventModel em;
  for (Eigen::Index e = 0; e < w.rows(); ++e) {
    const std::string p = "event." + std::to_string(e);
    em.event_ids.push_back(meta.get(p + ".id"));
    LinearSvm m;
    m.weights = w.row(e).transpose();
    m.bias = meta.get_double(p + ".bias");
    m.c = meta.get_double(p + ".c");
    em.models.push_back(std::move(m));
  }
  return em;
}

struct VariantResult {
  double accuracy = 0.0;
  double mean_ap = 0.0;
  std::map<std::string, double> ap;
};

using Results = std::map<std::string, VariantResult>;

inline Results run_eval(Workspace& ws) {
  ws.require_upstream_of("eval");
  const PipelineConfig& cfg = ws.config();
  const ClipIndex idx = load_index(ws, "test");
  Results results;
  io::KeyValues out = ws.provenance("eval");
  for (const auto& [name, parts] : descriptor_variants(cfg)) {
    const FeatureMatrix x = ws.load("pool", "test." + name + ".scmx");
    const EventModel em = load_event_model(ws, name);
    std::vector<std::string> predicted, truth;
    std::vector<RankedList> lists(em.event_ids.size());
    for (std::size_t i = 0; i < idx.entries.size(); ++i) {
      const auto& e = idx.entries[i];
      const Vector xi = x.row(static_cast<Eigen::Index>(i)).transpose();
      for (std::size_t k = 0; k < em.event_ids.size(); ++k) {
        lists[k].scores.push_back(decision_score(em.models[k], xi));
        lists[k].relevance.push_back(e.label == em.event_ids[k] ? 1 : 0);
        lists[k].clip_ids.push_back(e.clip_id);
      }
      if (e.label != io::kBackgroundLabel) {
        predicted.push_back(predict_event(em, xi));
        truth.push_back(e.label);
      }
    }
    VariantResult r;
    if (!truth.empty()) r.accuracy = accuracy(predicted, truth);
    for (std::size_t k = 0; k < em.event_ids.size(); ++k) r.ap[em.event_ids[k]] = average_precision(lists[k]);
    r.mean_ap = mean_average_precision(lists);
    out.set(name + ".accuracy", r.accuracy);
    out.set(name + ".map", r.mean_ap);
    for (const auto& [ev, ap] : r.ap) out.set(name + ".ap." + ev, ap);
    results[name] = std::move(r);
  }
  ws.save_text("eval", "results.txt", out.str());
  ws.finish("eval");
  return results;
}

inline Results load_results(const Workspace& ws) {
  const fs::path p = ws.stage_dir("eval") / "results.txt";
  if (!fs::exists(p)) throw StageOrderError("missing " + p.string() + ": run `eval` first");
  const io::KeyValues kv = io::KeyValues::load(p);
  Results res;
  for (const auto& [name, parts] : descriptor_variants(ws.config())) {
    VariantResult r;
    r.accuracy = kv.get_double(name + ".accuracy");
    r.mean_ap = kv.get_double(name + ".map");
    for (const auto& [k, v] : kv.items()) {
      const std::string prefix = name + ".ap.";
      if (k.rfind(prefix, 0) == 0) r.ap[k.substr(prefix.size())] = std::stod(v);
    }
    res[name] = std::move(r);
  }
  return res;
}

/// Runs every stage from synth to eval.
inline Results run_all(Workspace& ws) {
  run_synth(ws);
  run_whiten(ws);
  run_learn_dict(ws);
  run_encode(ws);
  run_pool(ws);
  run_train(ws);
  return run_eval(ws);
}

// ---------------------------------------------------------------------------
// Front-end commands (operate on raw inputs, not on the stage graph)
// ---------------------------------------------------------------------------

struct KeyframeOptions {
  double fps = 25.0;
  double alpha = 1.0;
  int min_colors = 26;
  int context_count = 10;
  double span_s = 5.0;
};

/// Histogram matrix (frames x bins) -> rows [frame_index, timestamp, context
/// timestamps...], one per keyframe.
inline FeatureMatrix keyframe_table(const FeatureMatrix& histograms, const KeyframeOptions& opt) {
  std::vector<FrameHistogram> frames;
  for (Eigen::Index f = 0; f < histograms.rows(); ++f) {
    FrameHistogram h;
    h.counts.assign(histograms.row(f).data(), histograms.row(f).data() + histograms.cols());
    h.frame_index = static_cast<int>(f);
    h.timestamp_s = static_cast<double>(f) / opt.fps;
    frames.push_back(std::move(h));
  }
  const auto keys = detect_keyframes(frames, opt.alpha, opt.min_colors);
  FeatureMatrix out(static_cast<Eigen::Index>(keys.size()), 2 + opt.context_count);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const double ts = keys[i] / opt.fps;
    const auto ctx = sample_context_frames(ts, opt.fps, opt.context_count, opt.span_s);
    out(static_cast<Eigen::Index>(i), 0) = keys[i];
    out(static_cast<Eigen::Index>(i), 1) = ts;
    for (int c = 0; c < opt.context_count; ++c) out(static_cast<Eigen::Index>(i), 2 + c) = ctx[static_cast<std::size_t>(c)];
  }
  return out;
}

struct AudioFeatureOptions {
  int sample_rate_hz = kFeatureSampleRate;
  int channels = 1;
  bool agc = true;
};

/// Raw PCM samples -> frames x 48 MFCC/delta/delta-delta matrix.
inline FeatureMatrix audio_feature_table(const std::vector<double>& pcm, const AudioFeatureOptions& opt) {
  AudioClip clip = take_left_channel(pcm, opt.channels, opt.sample_rate_hz);
  if (opt.agc) clip = tf_agc(clip);
  return mfcc_features(clip);
}

}  // namespace mmsc::pipeline
