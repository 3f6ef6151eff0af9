#include "lhdff/audio/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "lhdff/error.hpp"

namespace lhdff::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16_at(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t u32_at(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

bool tag_at(std::span<const std::uint8_t> b, std::size_t off, const char* tag) {
  return std::memcmp(b.data() + off, tag, 4) == 0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw DecodeError("file too short for a RIFF header", bytes.size());
  if (!tag_at(bytes, 0, "RIFF")) throw DecodeError("missing RIFF tag", 0);
  if (!tag_at(bytes, 8, "WAVE")) throw DecodeError("missing WAVE tag", 8);

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::size_t chunk_at = pos;
    const std::uint32_t size = u32_at(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_at(bytes, pos, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) throw DecodeError("truncated fmt chunk", chunk_at);
      format = u16_at(bytes, body);
      channels = u16_at(bytes, body + 2);
      rate = u32_at(bytes, body + 4);
      bits = u16_at(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw DecodeError("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk", chunk_at);
        format = u16_at(bytes, body + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (tag_at(bytes, pos, "data")) {
      if (!have_fmt) throw DecodeError("data chunk before fmt chunk", chunk_at);
      if (channels != 1 && channels != 2) {
        throw DecodeError("unsupported channel count " + std::to_string(channels), chunk_at);
      }
      if (rate == 0) throw DecodeError("sample rate is zero", chunk_at);
      std::size_t width = 0;
      if (format == kFormatPcm && bits == 16) {
        width = 2;
      } else if (format == kFormatFloat && bits == 32) {
        width = 4;
      } else {
        throw DecodeError("unsupported codec (format " + std::to_string(format) + ", " + std::to_string(bits) +
                              " bits)",
                          chunk_at);
      }
      if (body + size > bytes.size()) {
        throw DecodeError("data chunk declares " + std::to_string(size) + " bytes but only " +
                              std::to_string(bytes.size() - body) + " remain",
                          body);
      }
      const std::size_t frame_bytes = width * channels;
      if (size % frame_bytes != 0) throw DecodeError("data chunk size is not a whole number of frames", chunk_at);
      const std::size_t frames = size / frame_bytes;
      if (frames == 0) throw DecodeError("data chunk holds no samples", chunk_at);
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t off = body + (f * channels + c) * width;
          if (width == 2) {
            acc += static_cast<double>(static_cast<std::int16_t>(u16_at(bytes, off))) / 32768.0;
          } else {
            acc += static_cast<double>(std::bit_cast<float>(u32_at(bytes, off)));
          }
        }
        clip.samples[f] = acc / static_cast<double>(channels);
      }
      return clip;
    }
    pos = body + size + (size & 1u);  // chunks are word aligned
  }
  throw DecodeError(have_fmt ? "no data chunk" : "no fmt chunk", pos);
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_wav16(const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, clip.sample_rate);
  put_u32(out, clip.sample_rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

void write_wav16(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav16(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace lhdff::audio
