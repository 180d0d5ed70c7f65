// svprobe: command-line front end for the probing toolkit.

#include <svprobe/svprobe.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace svprobe;

namespace {

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string task;

  void attach(CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", config, "run configuration (key = value)");
    if (config_required) opt->required();
    cmd->add_option("--seed", seed, "override the configured seed");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--task", task, "override the task: singer_id, svt or technique");
  }

  RunConfig load() const {
    // Reject a bad task name before touching the filesystem.
    if (!task.empty()) parse_task(task);
    RunConfig c = load_run_config(config);
    if (!task.empty()) c.task = parse_task(task);
    if (seed) c.seed = *seed;
    if (!out.empty()) c.output_dir = out;
    return c;
  }
};

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
}

std::string targets_tsv(const FrameTargets& t) {
  std::string out = "frame\tonset\tsilence\tpitch_class\toctave\n";
  for (std::size_t i = 0; i < t.frames(); ++i) {
    out += std::to_string(i) + '\t' + std::to_string(t.onset[i]) + '\t' + std::to_string(t.silence[i]) +
           '\t' + std::to_string(t.pitch_class[i]) + '\t' + std::to_string(t.octave[i]) + '\n';
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"svprobe: layer-weighted linear probes over frozen SSL features"};
  app.require_subcommand(1);

  // chunk
  auto* chunk = app.add_subcommand("chunk", "split audio into fixed windows and RMS-gate them");
  std::string audio_path, chunk_out;
  double chunk_s = 5.0, rms_threshold = kDefaultRmsThreshold, trim_threshold = -1.0;
  bool trim = false;
  chunk->add_option("--audio", audio_path, "input WAV file")->required();
  chunk->add_option("--chunk-s", chunk_s, "window length in seconds")->capture_default_str();
  chunk->add_option("--rms-threshold", rms_threshold, "keep windows with RMS >= threshold")->capture_default_str();
  chunk->add_flag("--trim", trim, "trim leading/trailing silence before chunking");
  chunk->add_option("--trim-threshold", trim_threshold, "RMS threshold for trimming (default: --rms-threshold)");
  chunk->add_option("--out", chunk_out, "directory for kept windows and chunks.tsv");

  // encode-targets
  auto* encode = app.add_subcommand("encode-targets", "rasterize a note file into 20-channel frame targets");
  std::string notes_path, encode_out;
  std::size_t frames = 0;
  double frame_rate = 50.0;
  encode->add_option("--notes", notes_path, "note file (onset offset pitch per line)")->required();
  encode->add_option("--frames", frames, "number of frames")->required();
  encode->add_option("--frame-rate", frame_rate, "frames per second")->capture_default_str();
  encode->add_option("--out", encode_out, "output TSV (default stdout)");

  // train
  auto* train = app.add_subcommand("train", "stage-1 training; writes model.svpm, history.csv, layer_weights.csv");
  RunFlags train_flags;
  train_flags.attach(train, true);

  // run
  auto* run = app.add_subcommand("run", "train and evaluate end to end; writes report.txt and clips.jsonl too");
  RunFlags run_flags;
  run_flags.attach(run, true);

  // decode
  auto* decode = app.add_subcommand("decode", "decode notes from a transcription checkpoint and features");
  std::string decode_ckpt, decode_features, decode_out;
  DecoderConfig decoder;
  decode->add_option("--checkpoint", decode_ckpt, "model.svpm")->required();
  decode->add_option("--features", decode_features, "feature file (.svpf)")->required();
  decode->add_option("--out", decode_out, "output note file (default stdout)");
  decode->add_option("--onset-threshold", decoder.onset_threshold)->capture_default_str();
  decode->add_option("--silence-threshold", decoder.silence_threshold)->capture_default_str();
  decode->add_option("--min-note-frames", decoder.min_note_frames)->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "score notes (--ref/--est) or a checkpoint against a manifest");
  std::string ref_path, est_path, eval_ckpt;
  MatchTolerances tol;
  RunFlags eval_flags;
  eval_flags.attach(eval, false);
  eval->add_option("--ref", ref_path, "reference note file");
  eval->add_option("--est", est_path, "estimated note file");
  eval->add_option("--checkpoint", eval_ckpt, "model.svpm (with --config)");
  eval->add_option("--onset-tolerance", tol.onset_s)->capture_default_str();
  eval->add_option("--pitch-tolerance-cents", tol.pitch_cents)->capture_default_str();
  eval->add_option("--offset-tolerance", tol.offset_s)->capture_default_str();
  eval->add_option("--offset-ratio", tol.offset_ratio)->capture_default_str();

  // analyze-layers
  auto* analyze = app.add_subcommand("analyze-layers", "print normalized layer weights as CSV");
  std::string analyze_ckpt, analyze_out;
  analyze->add_option("--checkpoint", analyze_ckpt, "model.svpm")->required();
  analyze->add_option("--out", analyze_out, "output CSV (default stdout)");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic planted-layer fixture");
  std::string synth_task, synth_out;
  std::uint64_t synth_seed = 1;
  synth->add_option("--task", synth_task, "singer_id, svt or technique")->required();
  synth->add_option("--out", synth_out, "fixture directory")->required();
  synth->add_option("--seed", synth_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (chunk->parsed()) {
      AudioBuffer audio = read_wav(audio_path);
      if (trim) {
        audio.samples = trim_silence(audio.samples, trim_threshold >= 0.0 ? trim_threshold : rms_threshold,
                                     audio.sample_rate);
      }
      ChunkSpec spec;
      spec.chunk_s = chunk_s;
      spec.sample_rate = 16000;
      const auto windows = chunk_signal(audio, spec);
      if (!chunk_out.empty()) fs::create_directories(chunk_out);
      std::string table = "index\tstart_sample\tsamples\trms\tdecision\n";
      for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto decision = rms_gate(windows[i], rms_threshold);
        const auto start = static_cast<std::size_t>(windows[i].data() - audio.samples.data());
        table += std::to_string(i) + '\t' + std::to_string(start) + '\t' + std::to_string(windows[i].size()) +
                 '\t' + format_real(rms(windows[i])) + '\t' +
                 (decision == GateDecision::keep ? "keep" : "discard") + '\n';
        if (!chunk_out.empty() && decision == GateDecision::keep) {
          char name[32];
          std::snprintf(name, sizeof(name), "chunk_%05zu.wav", i);
          write_wav(fs::path(chunk_out) / name, windows[i], audio.sample_rate);
        }
      }
      emit(table, chunk_out.empty() ? "" : (fs::path(chunk_out) / "chunks.tsv").string());
    } else if (encode->parsed()) {
      emit(targets_tsv(rasterize_notes(read_note_file(notes_path), frames, frame_rate)), encode_out);
    } else if (train->parsed()) {
      const RunConfig config = train_flags.load();
      if (config.output_dir.empty()) throw ConfigError("train needs --out or an 'out' config key");
      const ExperimentData data = load_experiment_data(config);
      const TrainedProbe trained = train_and_save(config, data);
      std::cout << history_csv(trained.history);
    } else if (run->parsed()) {
      const RunConfig config = run_flags.load();
      if (config.output_dir.empty()) throw ConfigError("run needs --out or an 'out' config key");
      std::cout << run_experiment(config).report;
    } else if (decode->parsed()) {
      const ProbeModel model = read_checkpoint(decode_ckpt);
      const FeatureStack features = read_feature_file(decode_features);
      emit(format_notes(decode_notes(forward_frame(model, features), decoder, features.frame_rate())),
           decode_out);
    } else if (eval->parsed()) {
      if (!ref_path.empty() || !est_path.empty()) {
        if (ref_path.empty() || est_path.empty()) throw ConfigError("eval needs both --ref and --est");
        const auto scores = transcription_scores(read_note_file(ref_path), read_note_file(est_path), tol);
        emit(format_scores(scores), eval_flags.out);
      } else {
        if (eval_ckpt.empty() || eval_flags.config.empty()) {
          throw ConfigError("eval needs --ref/--est, or --checkpoint with --config");
        }
        const RunConfig config = eval_flags.load();
        const RunReport report = evaluate_checkpoint(config, read_checkpoint(eval_ckpt));
        if (!config.output_dir.empty()) {
          fs::create_directories(config.output_dir);
          write_text_file(config.output_dir / "report.txt", report.report);
          write_text_file(config.output_dir / "clips.jsonl", report.clip_records);
        }
        std::cout << report.report;
      }
    } else if (analyze->parsed()) {
      emit(layer_weight_csv(layer_weight_report(read_checkpoint(analyze_ckpt))), analyze_out);
    } else if (synth->parsed()) {
      synthetic::write_fixture(parse_task(synth_task), synth_out, synth_seed);
    }
  } catch (const ConfigError& e) {
    std::cerr << "svprobe: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "svprobe: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
