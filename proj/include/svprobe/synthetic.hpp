#pragma once

#include <svprobe/error.hpp>
#include <svprobe/pipeline.hpp>
#include <svprobe/probe.hpp>
#include <svprobe/random.hpp>
#include <svprobe/tensor.hpp>
#include <svprobe/transcribe.hpp>

#include <filesystem>
#include <string>
#include <vector>

// Synthetic feature stacks with a known answer: the task signal lives in one
// layer, every other layer is i.i.d. standard normal noise.
namespace svprobe::synthetic {

struct PlantedSpec {
  std::size_t layers = 13;
  std::size_t planted_layer = 3;
  std::size_t frames = 8;
  std::size_t dim = 16;
  std::size_t classes = 4;
  double amplitude = 3.0;
  double noise = 1.0;
  double frame_rate = 50.0;
};

inline FeatureStack noise_stack(const PlantedSpec& spec, std::size_t frames, Rng& rng) {
  FeatureStack s(spec.layers, frames, spec.dim, spec.frame_rate);
  for (float& v : s.values()) v = static_cast<float>(spec.noise * rng.normal());
  return s;
}

// Class c adds amplitude to feature dim (c mod dim) of every frame in the
// planted layer.
inline FeatureStack planted_clip(std::size_t label, const PlantedSpec& spec, Rng& rng) {
  if (spec.planted_layer >= spec.layers) throw Error("planted layer out of range");
  FeatureStack s = noise_stack(spec, spec.frames, rng);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    s.at(spec.planted_layer, t, label % spec.dim) += static_cast<float>(spec.amplitude);
  }
  return s;
}

// Balanced labels 0, 1, ..., classes-1, 0, 1, ...
inline std::vector<Example> planted_dataset(std::size_t count, const PlantedSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % spec.classes;
    out.push_back({planted_clip(label, spec, rng), label});
  }
  return out;
}

// Monophonic notes on the frame grid: every note spans >= min_frames frames
// and is followed by >= min_gap silent frames. Pitches in [36, 83].
inline NoteList random_notes(Rng& rng, std::size_t frames, double frame_rate, std::size_t min_frames = 3,
                             std::size_t min_gap = 1, std::size_t max_frames = 12) {
  NoteList notes;
  std::size_t t = rng.below(4);
  while (t + min_frames <= frames) {
    const std::size_t room = std::min(max_frames, frames - t);
    const std::size_t len = min_frames + rng.below(room - min_frames + 1);
    const int pitch = kLowestMidi + static_cast<int>(rng.below(kHighestMidi - kLowestMidi + 1));
    notes.push_back({static_cast<double>(t) / frame_rate, static_cast<double>(t + len) / frame_rate,
                     static_cast<double>(pitch)});
    t += len + min_gap + rng.below(4);
  }
  return notes;
}

// Planted layer carries the 20-channel frame targets of `notes` scaled by
// amplitude in its first 20 dims (dim must be >= 20).
inline FeatureStack transcription_clip(const NoteList& notes, const PlantedSpec& spec, Rng& rng) {
  if (spec.dim < channel::kTotal) throw Error("transcription fixture needs dim >= 20");
  const FrameTargets targets = rasterize_notes(notes, spec.frames, spec.frame_rate);
  FeatureStack s = noise_stack(spec, spec.frames, rng);
  const auto a = static_cast<float>(spec.amplitude);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    auto row = s.frame(spec.planted_layer, t);
    row[channel::kOnset] += a * static_cast<float>(targets.onset[t]);
    row[channel::kSilence] += a * static_cast<float>(targets.silence[t]);
    row[channel::kPitchBegin + static_cast<std::size_t>(targets.pitch_class[t])] += a;
    row[channel::kOctaveBegin + static_cast<std::size_t>(targets.octave[t])] += a;
  }
  return s;
}

struct FixtureLayout {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

// Writes features/<id>.svpf, manifest.jsonl and config.txt under `dir`.
inline void write_fixture(Task task, const std::filesystem::path& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  Rng rng(seed);

  PlantedSpec spec;
  std::vector<std::string> names;
  std::vector<std::size_t> train_counts;
  FixtureLayout layout;
  std::string config;
  switch (task) {
    case Task::singer_id:
      spec.dim = 8;
      names = {"singer_a", "singer_b", "singer_c", "singer_d"};
      layout = {48, 8, 24};
      config = "task = singer_id\nstage1_epochs = 200\nbatch_size = 16\n";
      break;
    case Task::technique:
      spec.dim = 8;
      names = {"belt", "breathy", "straight", "vibrato"};
      train_counts = {24, 12, 6, 6};  // imbalanced on purpose
      layout = {48, 8, 24};
      config = "task = technique\nclass_alpha = 0.2\nstage1_epochs = 200\nbatch_size = 16\n";
      break;
    case Task::svt:
      spec.dim = channel::kTotal;
      spec.frames = 50;
      spec.amplitude = 4.0;
      layout = {16, 0, 4};
      config = "task = svt\nstage1_epochs = 400\nbatch_size = 0\nstage1_lr = 0.03\n";
      break;
  }
  spec.classes = names.size();
  config += "manifest = manifest.jsonl\nseed = " + std::to_string(seed) + "\n";

  std::string manifest;
  std::size_t serial = 0;
  auto emit = [&](Split split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++serial) {
      ManifestEntry e;
      e.id = std::string(to_string(task)) + "_" + std::to_string(serial);
      e.split = split;
      FeatureStack features;
      if (task == Task::svt) {
        NoteList notes = random_notes(rng, spec.frames, spec.frame_rate);
        features = transcription_clip(notes, spec, rng);
        e.payload = std::move(notes);
      } else {
        std::size_t label = i % names.size();
        if (split == Split::train && !train_counts.empty()) {
          std::size_t acc = 0;
          for (label = 0; label < train_counts.size(); ++label) {
            acc += train_counts[label];
            if (i < acc) break;
          }
        }
        features = planted_clip(label, spec, rng);
        e.payload = names[label];
      }
      const fs::path rel = fs::path("features") / (e.id + ".svpf");
      write_feature_file(features, dir / rel);
      manifest += manifest_line(e, rel) + '\n';
    }
  };
  emit(Split::train, layout.train);
  emit(Split::validation, layout.validation);
  emit(Split::test, layout.test);
  write_text_file(dir / "manifest.jsonl", manifest);
  write_text_file(dir / "config.txt", config);
}

}  // namespace svprobe::synthetic
