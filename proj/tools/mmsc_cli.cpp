// mmsc: command-line driver for the multimodal sparse-coding pipeline.
//
// Stage commands share one work directory (--out). Failures print a single
// line "error: <category>: <message>" on stderr and exit nonzero.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "mmsc/mmsc.hpp"

namespace {

using namespace mmsc;
using pipeline::PipelineConfig;
using pipeline::Workspace;

struct Common {
  std::string out = "mmsc-work";
  std::string config;
  std::optional<std::uint64_t> seed;

  PipelineConfig resolve() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : PipelineConfig::load(config);
    if (seed) cfg.synth.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Work/output directory")->capture_default_str();
  cmd->add_option("--config", c.config, "key=value config file");
  cmd->add_option("--seed", c.seed, "Root seed (overrides the config)");
}

int exit_code_for(const std::string& category) {
  if (category == "input") return 2;
  if (category == "format") return 3;
  if (category == "io") return 4;
  if (category == "stage-order") return 5;
  if (category == "config") return 6;
  return 1;
}

void print_results(const pipeline::Results& res) {
  for (const auto& [name, r] : res) {
    std::cout << name << " accuracy=" << r.accuracy << " map=" << r.mean_ap << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal sparse coding for event detection"};
  app.require_subcommand(1);

  Common common;
  std::string input;

  pipeline::KeyframeOptions kf;
  auto* keyframes = app.add_subcommand("keyframes", "Detect keyframes from per-frame color histograms");
  add_common(keyframes, common);
  keyframes->add_option("--input", input, "Histogram matrix (frames x bins)")->required();
  keyframes->add_option("--fps", kf.fps, "Frame rate")->capture_default_str();
  keyframes->add_option("--alpha", kf.alpha, "Threshold multiplier")->capture_default_str();
  keyframes->add_option("--min-colors", kf.min_colors, "Minimum distinct colors")->capture_default_str();

  pipeline::AudioFeatureOptions af;
  bool no_agc = false;
  auto* audio = app.add_subcommand("audio-features", "Left channel, gain control and MFCC+deltas from raw f32 PCM");
  add_common(audio, common);
  audio->add_option("--input", input, "Raw little-endian float32 PCM")->required();
  audio->add_option("--rate", af.sample_rate_hz, "Sample rate in Hz")->capture_default_str();
  audio->add_option("--channels", af.channels, "Interleaved channel count")->capture_default_str();
  audio->add_flag("--no-agc", no_agc, "Skip automatic gain control");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset under <out>/data");
  add_common(synth, common);

  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {{"whiten", "Fit and apply PCA whitening"},
                          {"learn-dict", "Learn unimodal, joint and GMM models"},
                          {"encode", "Sparse-code every sample"},
                          {"pool", "Max-pool codes to clip descriptors"},
                          {"train", "Train one-vs-all linear SVMs"},
                          {"eval", "Report accuracy and average precision"}};
  std::map<std::string, CLI::App*> stage_cmds;
  for (const auto& s : stages) {
    stage_cmds[s.name] = app.add_subcommand(s.name, s.help);
    add_common(stage_cmds[s.name], common);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 64;
  }

  try {
    if (keyframes->parsed()) {
      common.resolve();
      const FeatureMatrix table = pipeline::keyframe_table(io::load_matrix(input), kf);
      io::save_matrix(std::filesystem::path(common.out) / "keyframes.scmx", table);
      std::cout << "keyframes=" << table.rows() << "\n";
      return 0;
    }
    if (audio->parsed()) {
      common.resolve();
      af.agc = !no_agc;
      const FeatureMatrix mfcc = pipeline::audio_feature_table(io::load_pcm_f32(input), af);
      io::save_matrix(std::filesystem::path(common.out) / "mfcc.scmx", mfcc);
      std::cout << "frames=" << mfcc.rows() << " dims=" << mfcc.cols() << "\n";
      return 0;
    }
    Workspace ws(common.out, common.resolve());
    if (synth->parsed()) {
      pipeline::run_synth(ws);
    } else if (stage_cmds["whiten"]->parsed()) {
      pipeline::run_whiten(ws);
    } else if (stage_cmds["learn-dict"]->parsed()) {
      pipeline::run_learn_dict(ws);
    } else if (stage_cmds["encode"]->parsed()) {
      pipeline::run_encode(ws);
    } else if (stage_cmds["pool"]->parsed()) {
      pipeline::run_pool(ws);
    } else if (stage_cmds["train"]->parsed()) {
      pipeline::run_train(ws);
    } else if (stage_cmds["eval"]->parsed()) {
      print_results(pipeline::run_eval(ws));
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
