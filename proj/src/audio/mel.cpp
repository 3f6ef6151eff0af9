#include "lhdff/audio/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "lhdff/error.hpp"

namespace lhdff::audio {

namespace {

// FFTW planning is not thread-safe; execution with new-array calls is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }

  // |X_k|^2 for k = 0..n/2
  void power(std::vector<double>& out) {
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

void validate(const MelConfig& cfg) {
  if (cfg.sample_rate == 0) throw ConfigError("mel config: sample rate must be positive");
  if (cfg.n_fft < 2 || cfg.hop == 0 || cfg.n_mels == 0) throw ConfigError("mel config: invalid frame geometry");
  const double top = cfg.fmax > 0.0 ? cfg.fmax : cfg.sample_rate / 2.0;
  if (cfg.fmin < 0.0 || cfg.fmin >= top) throw ConfigError("mel config: fmin must lie below fmax");
  if (cfg.log_floor <= 0.0) throw ConfigError("mel config: log floor must be positive");
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t frame_count(std::size_t samples, const MelConfig& cfg) {
  if (samples < cfg.n_fft) return 0;
  return 1 + (samples - cfg.n_fft) / cfg.hop;
}

std::vector<double> mel_centers(const MelConfig& cfg) {
  validate(cfg);
  const double top = cfg.fmax > 0.0 ? cfg.fmax : cfg.sample_rate / 2.0;
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(top);
  std::vector<double> centers(cfg.n_mels);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    centers[m] = mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) / static_cast<double>(cfg.n_mels + 1));
  }
  return centers;
}

std::vector<double> mel_filterbank(const MelConfig& cfg) {
  validate(cfg);
  const double top = cfg.fmax > 0.0 ? cfg.fmax : cfg.sample_rate / 2.0;
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(top);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  std::vector<double> bank(cfg.n_mels * n_bins, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m];
    const double centre = edges[m + 1];
    const double right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      const double rise = (f - left) / (centre - left);
      const double fall = (right - f) / (right - centre);
      bank[m * n_bins + k] = std::max(0.0, std::min(rise, fall));
    }
  }
  return bank;
}

MelSpectrogram log_mel(const AudioClip& clip, const MelConfig& config) {
  MelConfig cfg = config;
  cfg.sample_rate = clip.sample_rate;
  validate(cfg);
  if (clip.samples.size() < cfg.n_fft) {
    throw DimensionError("clip of " + std::to_string(clip.samples.size()) + " samples is shorter than one " +
                         std::to_string(cfg.n_fft) + "-sample window");
  }
  const std::size_t frames = frame_count(clip.samples.size(), cfg);
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const std::vector<double> bank = mel_filterbank(cfg);

  std::vector<double> window(cfg.n_fft);
  for (std::size_t i = 0; i < cfg.n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg.n_fft));
  }

  MelSpectrogram spec;
  spec.frames = frames;
  spec.bins = cfg.n_mels;
  spec.values.resize(frames * cfg.n_mels);
  spec.hop_seconds = static_cast<double>(cfg.hop) / cfg.sample_rate;

  RealFft fft(cfg.n_fft);
  std::vector<double> power;
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = clip.samples.data() + t * cfg.hop;
    double* in = fft.input();
    for (std::size_t i = 0; i < cfg.n_fft; ++i) in[i] = src[i] * window[i];
    fft.power(power);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double* w = bank.data() + m * n_bins;
      double energy = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) energy += w[k] * power[k];
      spec.values[t * cfg.n_mels + m] = std::log(energy + cfg.log_floor);
    }
  }
  return spec;
}

}  // namespace lhdff::audio
