#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dunet/error.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

enum class WavCodec : std::uint16_t { pcm16 = 1, float32 = 3 };

/// Header facts needed to locate and decode the sample data.
struct WavInfo {
  WavCodec codec = WavCodec::float32;
  std::size_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::size_t frames = 0;
  std::uint64_t data_offset = 0;

  std::size_t bytes_per_sample() const { return codec == WavCodec::pcm16 ? 2 : 4; }
};

template <typename Scalar>
struct WavData {
  Tensor<Scalar> samples;  // [channels, frames]
  std::uint32_t sample_rate = 0;
  WavCodec codec = WavCodec::float32;
};

namespace detail {

inline std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}
inline void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::string chunk_name(const unsigned char* id) {
  std::string s(reinterpret_cast<const char*>(id), 4);
  for (char& c : s)
    if (c < 32 || c > 126) c = '?';
  return s;
}

inline float decode_float(const unsigned char* p) { return std::bit_cast<float>(le32(p)); }
inline float decode_pcm16(const unsigned char* p) {
  return static_cast<float>(static_cast<std::int16_t>(le16(p))) / 32768.0f;
}

}  // namespace detail

/// Walks the RIFF chunk list and validates the fmt chunk. Supports PCM16 and
/// IEEE float32 (plain or WAVE_FORMAT_EXTENSIBLE), 1 or 2 channels.
inline WavInfo read_wav_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open WAV file '" + path.string() + "'");
  const std::string where = " in '" + path.string() + "'";
  unsigned char riff[12];
  if (!in.read(reinterpret_cast<char*>(riff), 12)) throw FormatError("truncated RIFF header" + where);
  if (std::memcmp(riff, "RIFF", 4) != 0)
    throw FormatError("expected chunk 'RIFF', found '" + detail::chunk_name(riff) + "'" + where);
  if (std::memcmp(riff + 8, "WAVE", 4) != 0)
    throw FormatError("RIFF form type is '" + detail::chunk_name(riff + 8) + "', not 'WAVE'" + where);

  WavInfo info;
  bool have_fmt = false, have_data = false;
  std::uint64_t pos = 12;
  unsigned char head[8];
  while (!have_data && in.read(reinterpret_cast<char*>(head), 8)) {
    const std::uint32_t size = detail::le32(head + 4);
    pos += 8;
    if (std::memcmp(head, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("chunk 'fmt ' is " + std::to_string(size) + " bytes, need 16" + where);
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size)) throw FormatError("chunk 'fmt ' truncated" + where);
      std::uint16_t format = detail::le16(fmt.data());
      if (format == 0xFFFE) {
        if (size < 40) throw FormatError("chunk 'fmt ' extensible block too short" + where);
        format = detail::le16(fmt.data() + 24);
      }
      const std::uint16_t bits = detail::le16(fmt.data() + 14);
      if (format == 1 && bits == 16) info.codec = WavCodec::pcm16;
      else if (format == 3 && bits == 32) info.codec = WavCodec::float32;
      else
        throw FormatError("chunk 'fmt ': unsupported codec " + std::to_string(format) + " with " +
                          std::to_string(bits) + " bits per sample" + where);
      info.channels = detail::le16(fmt.data() + 2);
      info.sample_rate = detail::le32(fmt.data() + 4);
      if (info.channels < 1 || info.channels > 2)
        throw FormatError("chunk 'fmt ': " + std::to_string(info.channels) + " channels unsupported" + where);
      if (info.sample_rate == 0) throw FormatError("chunk 'fmt ': zero sample rate" + where);
      if (size % 2) in.ignore(1);
      pos += size + (size % 2);
      have_fmt = true;
    } else if (std::memcmp(head, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("chunk 'data' precedes chunk 'fmt '" + where);
      const std::size_t frame_bytes = info.channels * info.bytes_per_sample();
      info.data_offset = pos;
      info.frames = size / frame_bytes;
      in.seekg(0, std::ios::end);
      const auto file_size = static_cast<std::uint64_t>(in.tellg());
      if (pos + static_cast<std::uint64_t>(info.frames) * frame_bytes > file_size)
        throw FormatError("chunk 'data' declares " + std::to_string(size) + " bytes but the file ends early" + where);
      have_data = true;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
      pos += size + (size % 2);
    }
  }
  if (!have_fmt) throw FormatError("missing chunk 'fmt '" + where);
  if (!have_data) throw FormatError("missing chunk 'data'" + where);
  return info;
}

/// Frames [first, first + count) de-interleaved into [channels, count].
/// PCM16 is scaled by 1/32768.
template <typename Scalar>
Tensor<Scalar> read_wav_frames(const std::filesystem::path& path, const WavInfo& info, std::size_t first,
                               std::size_t count) {
  if (first + count > info.frames)
    throw FormatError("frame range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                      ") exceeds " + std::to_string(info.frames) + " frames in '" + path.string() + "'");
  const std::size_t bps = info.bytes_per_sample(), frame_bytes = bps * info.channels;
  std::vector<unsigned char> raw(count * frame_bytes);
  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(info.data_offset + first * frame_bytes));
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw FormatError("chunk 'data' truncated in '" + path.string() + "'");
  Tensor<Scalar> out({info.channels, count});
  for (std::size_t t = 0; t < count; ++t)
    for (std::size_t c = 0; c < info.channels; ++c) {
      const unsigned char* p = raw.data() + t * frame_bytes + c * bps;
      out.at(c, t) = static_cast<Scalar>(info.codec == WavCodec::pcm16 ? detail::decode_pcm16(p)
                                                                       : detail::decode_float(p));
    }
  return out;
}

template <typename Scalar>
WavData<Scalar> load_wav(const std::filesystem::path& path) {
  const WavInfo info = read_wav_info(path);
  return {read_wav_frames<Scalar>(path, info, 0, info.frames), info.sample_rate, info.codec};
}

/// PCM16 value for a float sample: clamped to [-1, 1], scaled by 32768, rounded, saturated.
inline std::int16_t to_pcm16(double v) {
  const double scaled = std::round(std::clamp(v, -1.0, 1.0) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

/// Canonical 44-byte-header RIFF file from a [channels, frames] tensor.
template <typename Scalar>
void write_wav(const std::filesystem::path& path, const Tensor<Scalar>& samples, std::uint32_t sample_rate,
               WavCodec codec = WavCodec::float32) {
  if (samples.rank() != 2) throw DimensionError("write_wav expects [channels, frames]");
  const std::size_t channels = samples.dim(0), frames = samples.dim(1);
  const std::uint16_t bps = codec == WavCodec::pcm16 ? 2 : 4;
  const std::uint64_t data_bytes = static_cast<std::uint64_t>(frames) * channels * bps;
  if (data_bytes > 0xFFFFFFFFull - 36) throw FormatError("signal too long for a RIFF file");

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put32(out, static_cast<std::uint32_t>(36 + data_bytes));
  out += "WAVEfmt ";
  detail::put32(out, 16);
  detail::put16(out, static_cast<std::uint16_t>(codec));
  detail::put16(out, static_cast<std::uint16_t>(channels));
  detail::put32(out, sample_rate);
  detail::put32(out, static_cast<std::uint32_t>(sample_rate * channels * bps));
  detail::put16(out, static_cast<std::uint16_t>(channels * bps));
  detail::put16(out, static_cast<std::uint16_t>(8 * bps));
  out += "data";
  detail::put32(out, static_cast<std::uint32_t>(data_bytes));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < channels; ++c) {
      if (codec == WavCodec::pcm16) detail::put16(out, static_cast<std::uint16_t>(to_pcm16(samples.at(c, t))));
      else detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(samples.at(c, t))));
    }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !f.write(out.data(), static_cast<std::streamsize>(out.size())))
    throw Error("cannot write WAV file '" + path.string() + "'");
}

}  // namespace dunet
