#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lhdff/audio/wav.hpp"

namespace lhdff::audio {

struct MelConfig {
  std::uint32_t sample_rate = 16000;
  std::size_t n_fft = 1024;  // also the window length
  std::size_t hop = 512;
  std::size_t n_mels = 64;
  double fmin = 50.0;
  double fmax = 0.0;  // <= 0 means sample_rate / 2
  double log_floor = 1e-10;
};

// T × n_mels log-mel energies, row-major (frame-major).
struct MelSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;
  double hop_seconds = 0.0;

  double at(std::size_t frame, std::size_t bin) const { return values[frame * bins + bin]; }
  double& at(std::size_t frame, std::size_t bin) { return values[frame * bins + bin]; }
};

double hz_to_mel(double hz);  // HTK: 2595 log10(1 + f/700)
double mel_to_hz(double mel);

// 1 + floor((len - n_fft) / hop) for len >= n_fft, else 0.
std::size_t frame_count(std::size_t samples, const MelConfig& cfg);

// Triangular filters with unit peak, n_mels × (n_fft/2 + 1), row-major.
std::vector<double> mel_filterbank(const MelConfig& cfg);

// Centre frequency (Hz) of each filter.
std::vector<double> mel_centers(const MelConfig& cfg);

// Periodic Hann window -> real FFT -> |X|^2 -> mel filterbank -> ln(x + floor).
// The clip's own sample rate overrides cfg.sample_rate.
MelSpectrogram log_mel(const AudioClip& clip, const MelConfig& cfg);

}  // namespace lhdff::audio
