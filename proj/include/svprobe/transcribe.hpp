#pragma once

#include <svprobe/error.hpp>
#include <svprobe/tensor.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace svprobe {

// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Notes
// ---------------------------------------------------------------------------

struct NoteEvent {
  double onset_s = 0.0;
  double offset_s = 0.0;
  double pitch = 0.0;  // MIDI semitones

  double duration() const noexcept { return offset_s - onset_s; }
  bool operator==(const NoteEvent&) const = default;
};

using NoteList = std::vector<NoteEvent>;

inline constexpr int kLowestMidi = 36;   // C2
inline constexpr int kHighestMidi = 83;  // B5

struct PitchParts {
  int pitch_class = 0;  // 0..11, C = 0
  int octave = 0;       // 0..3 for octaves 2..5
  bool operator==(const PitchParts&) const = default;
};

inline PitchParts midi_to_parts(int midi) {
  if (midi < kLowestMidi || midi > kHighestMidi) {
    throw Error("pitch " + std::to_string(midi) + " outside [36, 83]");
  }
  return {midi % 12, midi / 12 - 3};
}

inline int parts_to_midi(int pitch_class, int octave) { return 12 * (octave + 3) + pitch_class; }
inline int parts_to_midi(PitchParts p) { return parts_to_midi(p.pitch_class, p.octave); }

// ---------------------------------------------------------------------------
// Frame targets: 20 channels per frame, packed as
//   [onset, silence, pitch_class x 13 (12 = inactive), octave x 5 (4 = inactive)]
// ---------------------------------------------------------------------------
namespace channel {
inline constexpr std::size_t kOnset = 0;
inline constexpr std::size_t kSilence = 1;
inline constexpr std::size_t kPitchBegin = 2;
inline constexpr std::size_t kPitchCount = 13;
inline constexpr std::size_t kOctaveBegin = kPitchBegin + kPitchCount;
inline constexpr std::size_t kOctaveCount = 5;
inline constexpr std::size_t kTotal = kOctaveBegin + kOctaveCount;
inline constexpr int kInactivePitch = 12;
inline constexpr int kInactiveOctave = 4;
static_assert(kTotal == 20);
}  // namespace channel

struct FrameTargets {
  std::vector<std::uint8_t> onset;
  std::vector<std::uint8_t> silence;
  std::vector<int> pitch_class;
  std::vector<int> octave;

  FrameTargets() = default;
  explicit FrameTargets(std::size_t frames)
      : onset(frames, 0), silence(frames, 1),
        pitch_class(frames, channel::kInactivePitch), octave(frames, channel::kInactiveOctave) {}

  std::size_t frames() const noexcept { return onset.size(); }

  void validate() const {
    const std::size_t n = onset.size();
    if (silence.size() != n || pitch_class.size() != n || octave.size() != n) {
      throw Error("frame targets: channel lengths differ");
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (onset[t] > 1 || silence[t] > 1) throw Error("frame targets: non-binary onset/silence");
      if (pitch_class[t] < 0 || pitch_class[t] > channel::kInactivePitch ||
          octave[t] < 0 || octave[t] > channel::kInactiveOctave) {
        throw Error("frame targets: class index out of range at frame " + std::to_string(t));
      }
      const bool silent = silence[t] == 1;
      if (silent != (pitch_class[t] == channel::kInactivePitch) ||
          silent != (octave[t] == channel::kInactiveOctave)) {
        throw Error("frame targets: silence and inactive classes disagree at frame " +
                    std::to_string(t));
      }
      if (onset[t] == 1 && silent) {
        throw Error("frame targets: onset on a silent frame " + std::to_string(t));
      }
    }
  }

  bool operator==(const FrameTargets&) const = default;
};

inline std::size_t time_to_frame(double seconds, double frame_rate) {
  const double f = std::round(seconds * frame_rate);
  return f <= 0.0 ? 0 : static_cast<std::size_t>(f);
}

// Notes with fewer than one frame after rounding are not represented.
inline FrameTargets rasterize_notes(const NoteList& notes, std::size_t frames, double frame_rate) {
  if (!(frame_rate > 0.0)) throw Error("rasterize: frame_rate must be positive");
  NoteList sorted = notes;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const NoteEvent& a, const NoteEvent& b) { return a.onset_s < b.onset_s; });
  FrameTargets out(frames);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const NoteEvent& n = sorted[i];
    if (!(n.offset_s > n.onset_s)) throw Error("rasterize: note with offset <= onset");
    if (i + 1 < sorted.size() && sorted[i + 1].onset_s < n.offset_s) {
      throw Error("rasterize: overlapping notes at " + format_real(sorted[i + 1].onset_s) + " s");
    }
    const double rounded = std::round(n.pitch);
    if (rounded != n.pitch) throw Error("rasterize: non-integral pitch " + format_real(n.pitch));
    const PitchParts parts = midi_to_parts(static_cast<int>(rounded));

    const std::size_t begin = time_to_frame(n.onset_s, frame_rate);
    const std::size_t end = std::min(time_to_frame(n.offset_s, frame_rate), frames);
    if (begin >= frames) {
      throw Error("rasterize: onset frame " + std::to_string(begin) + " >= frame count " +
                  std::to_string(frames));
    }
    if (end <= begin) continue;
    out.onset[begin] = 1;
    for (std::size_t t = begin; t < end; ++t) {
      out.silence[t] = 0;
      out.pitch_class[t] = parts.pitch_class;
      out.octave[t] = parts.octave;
    }
  }
  return out;
}

// Saturated logits that reproduce `targets` exactly under the decoder; handy
// for fixtures and round-trip checks.
inline Matrix targets_to_logits(const FrameTargets& targets, double magnitude = 30.0) {
  Matrix out(targets.frames(), channel::kTotal, -magnitude);
  for (std::size_t t = 0; t < targets.frames(); ++t) {
    out(t, channel::kOnset) = targets.onset[t] ? magnitude : -magnitude;
    out(t, channel::kSilence) = targets.silence[t] ? magnitude : -magnitude;
    out(t, channel::kPitchBegin + static_cast<std::size_t>(targets.pitch_class[t])) = magnitude;
    out(t, channel::kOctaveBegin + static_cast<std::size_t>(targets.octave[t])) = magnitude;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoding frame logits into notes
// ---------------------------------------------------------------------------

struct DecoderConfig {
  double onset_threshold = 0.4;
  double silence_threshold = 0.5;
  std::size_t min_note_frames = 1;

  void validate() const {
    if (!(onset_threshold > 0.0 && onset_threshold < 1.0) ||
        !(silence_threshold > 0.0 && silence_threshold < 1.0)) {
      throw ConfigError("decoder thresholds must lie in (0, 1)");
    }
  }
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

// First index of the maximum within [begin, begin + count).
inline std::size_t argmax_range(std::span<const double> row, std::size_t begin, std::size_t count) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < count; ++i) {
    if (row[begin + i] > row[begin + best]) best = i;
  }
  return best;
}

}  // namespace detail

// Frames picked as onsets: above threshold and a local maximum of the onset
// probability; runs of consecutive picks collapse onto their first frame.
inline std::vector<std::size_t> detect_onsets(const Matrix& logits, double threshold) {
  const std::size_t frames = logits.rows();
  std::vector<double> prob(frames);
  for (std::size_t t = 0; t < frames; ++t) prob[t] = sigmoid(logits(t, channel::kOnset));

  std::vector<std::size_t> onsets;
  bool previous_picked = false;
  for (std::size_t t = 0; t < frames; ++t) {
    const bool peak = prob[t] > threshold && (t == 0 || prob[t] >= prob[t - 1]) &&
                      (t + 1 == frames || prob[t] >= prob[t + 1]);
    if (peak && !previous_picked) onsets.push_back(t);
    previous_picked = peak;
  }
  return onsets;
}

inline NoteList decode_notes(const Matrix& logits, const DecoderConfig& config, double frame_rate) {
  if (logits.cols() != channel::kTotal) {
    throw Error("decode: expected 20 channels, got " + std::to_string(logits.cols()));
  }
  if (!(frame_rate > 0.0)) throw Error("decode: frame_rate must be positive");
  config.validate();

  const std::size_t frames = logits.rows();
  const std::vector<std::size_t> onsets = detect_onsets(logits, config.onset_threshold);

  NoteList notes;
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    const std::size_t begin = onsets[i];
    const std::size_t limit = i + 1 < onsets.size() ? onsets[i + 1] : frames;
    std::size_t end = limit;
    for (std::size_t t = begin + 1; t < limit; ++t) {
      if (sigmoid(logits(t, channel::kSilence)) > config.silence_threshold) {
        end = t;
        break;
      }
    }
    if (end - begin < config.min_note_frames) continue;

    // Mode of (pitch class, octave); std::map iterates by ascending MIDI so the
    // strict > keeps the lowest pitch on ties.
    std::map<int, std::size_t> votes;
    for (std::size_t t = begin; t < end; ++t) {
      const auto row = logits.row(t);
      const auto pc = detail::argmax_range(row, channel::kPitchBegin, channel::kPitchCount);
      const auto oct = detail::argmax_range(row, channel::kOctaveBegin, channel::kOctaveCount);
      if (pc == channel::kInactivePitch || oct == channel::kInactiveOctave) continue;
      ++votes[parts_to_midi(static_cast<int>(pc), static_cast<int>(oct))];
    }
    if (votes.empty()) continue;
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    notes.push_back({static_cast<double>(begin) / frame_rate, static_cast<double>(end) / frame_rate,
                     static_cast<double>(best->first)});
  }
  return notes;
}

// ---------------------------------------------------------------------------
// Note files: one note per line, "onset_s offset_s pitch", '#' starts a comment.
// ---------------------------------------------------------------------------

inline NoteList parse_notes(std::istream& in, const std::string& source = "<notes>") {
  NoteList notes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& c : line) {
      if (c == ',' || c == '\t') c = ' ';
    }
    std::istringstream fields(line);
    NoteEvent n;
    if (!(fields >> n.onset_s)) continue;  // blank line
    std::string extra;
    if (!(fields >> n.offset_s >> n.pitch) || (fields >> extra)) {
      throw Error(source + ":" + std::to_string(line_no) + ": expected 'onset offset pitch'");
    }
    if (!std::isfinite(n.onset_s) || !std::isfinite(n.offset_s) || !std::isfinite(n.pitch) ||
        !(n.offset_s > n.onset_s)) {
      throw Error(source + ":" + std::to_string(line_no) + ": invalid note");
    }
    notes.push_back(n);
  }
  std::stable_sort(notes.begin(), notes.end(),
                   [](const NoteEvent& a, const NoteEvent& b) { return a.onset_s < b.onset_s; });
  return notes;
}

inline NoteList read_note_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open note file '" + path.string() + "'");
  return parse_notes(in, path.string());
}

inline std::string format_notes(const NoteList& notes) {
  std::string out;
  for (const NoteEvent& n : notes) {
    out += format_real(n.onset_s) + ' ' + format_real(n.offset_s) + ' ' + format_real(n.pitch) + '\n';
  }
  return out;
}

inline void write_note_file(const NoteList& notes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << format_notes(notes);
}

// Notes intersected with [start_s, end_s), shifted to window-local time.
// Pieces shorter than one frame are dropped.
inline NoteList clip_notes_to_window(const NoteList& notes, double start_s, double end_s,
                                     double frame_rate) {
  NoteList out;
  for (const NoteEvent& n : notes) {
    const double on = std::max(n.onset_s, start_s);
    const double off = std::min(n.offset_s, end_s);
    if (off <= on) continue;
    NoteEvent local{on - start_s, off - start_s, n.pitch};
    const std::size_t first = time_to_frame(local.onset_s, frame_rate);
    const std::size_t last = time_to_frame(local.offset_s, frame_rate);
    if (last <= first) continue;
    out.push_back(local);
  }
  return out;
}

}  // namespace svprobe
