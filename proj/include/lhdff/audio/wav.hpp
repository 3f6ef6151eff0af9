#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lhdff::audio {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  std::uint32_t sample_rate = 16000;
};

// RIFF/WAVE with PCM 16-bit or IEEE float 32-bit, one or two channels.
// Stereo is averaged to mono; 16-bit samples are scaled by 1/32768.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);

// 16-bit PCM mono. Samples are clipped to [-1, 1) before quantisation.
std::vector<std::uint8_t> encode_wav16(const AudioClip& clip);
void write_wav16(const std::filesystem::path& path, const AudioClip& clip);

}  // namespace lhdff::audio
