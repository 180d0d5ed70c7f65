#pragma once

#include <svprobe/error.hpp>
#include <svprobe/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace svprobe {

struct AudioBuffer {
  std::vector<float> samples;  // mono, full scale = 1.0
  std::uint32_t sample_rate = 16000;

  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

struct ChunkSpec {
  double chunk_s = 5.0;
  std::uint32_t sample_rate = 16000;
  double overlap_s = 0.0;

  std::size_t chunk_samples() const {
    return static_cast<std::size_t>(std::llround(chunk_s * sample_rate));
  }

  void validate() const {
    if (!(chunk_s > 0.0)) throw ConfigError("chunk length must be positive");
    if (sample_rate == 0) throw ConfigError("sample rate must be positive");
    if (overlap_s != 0.0) throw ConfigError("only non-overlapping chunks are supported");
    if (chunk_samples() == 0) throw ConfigError("chunk shorter than one sample");
  }
};

inline constexpr double kDefaultRmsThreshold = 0.01;

// Consecutive non-overlapping windows; a trailing partial window is dropped.
inline std::vector<std::span<const float>> chunk_signal(const AudioBuffer& audio, const ChunkSpec& spec) {
  spec.validate();
  if (audio.sample_rate != spec.sample_rate) {
    throw Error("audio is " + std::to_string(audio.sample_rate) + " Hz, chunking expects " +
                std::to_string(spec.sample_rate) + " Hz");
  }
  const std::size_t len = spec.chunk_samples();
  std::vector<std::span<const float>> windows;
  std::span<const float> all(audio.samples);
  for (std::size_t start = 0; start + len <= all.size(); start += len) {
    windows.push_back(all.subspan(start, len));
  }
  return windows;
}

inline double rms(std::span<const float> window) {
  if (window.empty()) return 0.0;
  double acc = 0.0;
  for (float x : window) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc / static_cast<double>(window.size()));
}

enum class GateDecision { keep, discard };

inline GateDecision rms_gate(std::span<const float> window, double threshold = kDefaultRmsThreshold) {
  if (window.empty()) throw Error("rms_gate: empty window");
  return rms(window) >= threshold ? GateDecision::keep : GateDecision::discard;
}

// Drops leading and trailing audio whose 25 ms / 10 ms-hop framewise RMS is
// below threshold. The kept span runs from the start of the first active
// frame to the end of the last one, so no sample of an active frame is lost.
inline std::vector<float> trim_silence(std::span<const float> samples, double threshold,
                                       std::uint32_t sample_rate = 16000) {
  const auto frame = static_cast<std::size_t>(std::llround(0.025 * sample_rate));
  const auto hop = static_cast<std::size_t>(std::llround(0.010 * sample_rate));
  const std::size_t n = samples.size();
  if (n == 0) return {};
  if (n <= frame) {
    if (rms(samples) < threshold) return {};
    return {samples.begin(), samples.end()};
  }
  const std::size_t frames = 1 + (n - frame) / hop;
  auto active = [&](std::size_t k) { return rms(samples.subspan(k * hop, frame)) >= threshold; };

  std::size_t first = 0;
  while (first < frames && !active(first)) ++first;
  if (first == frames) return {};
  std::size_t last = frames - 1;
  while (!active(last)) --last;

  const std::size_t begin = first * hop;
  const std::size_t end = last + 1 == frames ? n : last * hop + frame;
  return {samples.begin() + static_cast<std::ptrdiff_t>(begin),
          samples.begin() + static_cast<std::ptrdiff_t>(end)};
}

// ---------------------------------------------------------------------------
// WAV files. Reads 16/24/32-bit PCM and 32-bit float, downmixing channels by
// averaging. Writes mono 32-bit float.
// ---------------------------------------------------------------------------

inline AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  auto tag = [&](std::size_t off, const char* s) {
    return off + 4 <= bytes.size() && std::memcmp(bytes.data() + off, s, 4) == 0;
  };
  if (!tag(0, "RIFF") || !tag(8, "WAVE")) throw Error("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::span<const unsigned char> data;
  bool have_fmt = false, have_data = false;
  for (std::size_t off = 12; off + 8 <= bytes.size();) {
    const auto size = le::get_uint<std::uint32_t>(bytes, off + 4);
    const std::size_t body = off + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (tag(off, "fmt ")) {
      if (avail < 16) throw Error("wav: short fmt chunk");
      format = le::get_uint<std::uint16_t>(bytes, body);
      channels = le::get_uint<std::uint16_t>(bytes, body + 2);
      rate = le::get_uint<std::uint32_t>(bytes, body + 4);
      bits = le::get_uint<std::uint16_t>(bytes, body + 14);
      if (format == 0xFFFE && avail >= 26) format = le::get_uint<std::uint16_t>(bytes, body + 24);
      have_fmt = true;
    } else if (tag(off, "data")) {
      data = bytes.subspan(body, avail);
      have_data = true;
    }
    off = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) throw Error("wav: missing fmt or data chunk");
  if (channels == 0 || rate == 0) throw Error("wav: invalid channel count or rate");
  const bool pcm = format == 1 && (bits == 16 || bits == 24 || bits == 32);
  const bool ieee = format == 3 && bits == 32;
  if (!pcm && !ieee) {
    throw Error("wav: unsupported encoding (format " + std::to_string(format) + ", " +
                std::to_string(bits) + " bits)");
  }

  const std::size_t width = bits / 8;
  const std::size_t frames = data.size() / (width * channels);
  AudioBuffer audio;
  audio.sample_rate = rate;
  audio.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (i * channels + c) * width;
      double v;
      if (ieee) {
        v = le::get_f32(data, off);
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le::get_uint<std::uint16_t>(data, off)) / 32768.0;
      } else if (bits == 24) {
        const std::uint32_t u = static_cast<std::uint32_t>(data[off]) |
                                (static_cast<std::uint32_t>(data[off + 1]) << 8) |
                                (static_cast<std::uint32_t>(data[off + 2]) << 16);
        v = (static_cast<std::int32_t>(u << 8) >> 8) / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le::get_uint<std::uint32_t>(data, off)) / 2147483648.0;
      }
      acc += v;
    }
    audio.samples[i] = static_cast<float>(acc / channels);
  }
  return audio;
}

inline std::vector<unsigned char> encode_wav(std::span<const float> samples, std::uint32_t sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  std::vector<unsigned char> out{'R', 'I', 'F', 'F'};
  le::put_uint<std::uint32_t>(out, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) out.push_back(static_cast<unsigned char>(c));
  le::put_uint<std::uint32_t>(out, 16);
  le::put_uint<std::uint16_t>(out, 3);  // IEEE float
  le::put_uint<std::uint16_t>(out, 1);
  le::put_uint<std::uint32_t>(out, sample_rate);
  le::put_uint<std::uint32_t>(out, sample_rate * 4);
  le::put_uint<std::uint16_t>(out, 4);
  le::put_uint<std::uint16_t>(out, 32);
  for (char c : std::string("data")) out.push_back(static_cast<unsigned char>(c));
  le::put_uint<std::uint32_t>(out, data_bytes);
  for (float s : samples) le::put_f32(out, s);
  return out;
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  try {
    return decode_wav(read_binary_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write_wav(const std::filesystem::path& path, std::span<const float> samples,
                      std::uint32_t sample_rate) {
  write_binary_file(path, encode_wav(samples, sample_rate));
}

}  // namespace svprobe
