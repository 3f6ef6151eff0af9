#include "lhdff/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "lhdff/error.hpp"

namespace lhdff::data {

namespace {

struct Phrasing {
  EventKind kind;
  const char* name;
  const char* lexeme;
  std::array<const char*, 3> phrases;
};

constexpr std::array<Phrasing, kEventKinds> kCatalog = {{
    {EventKind::kLowTone, "low-tone", "tone", {"a low tone", "a deep tone", "a low pitched tone"}},
    {EventKind::kHighTone, "high-tone", "tone", {"a high tone", "a shrill tone", "a high pitched tone"}},
    {EventKind::kRisingChirp, "rising-chirp", "chirp", {"a rising chirp", "an upward chirp", "a chirp going up"}},
    {EventKind::kFallingChirp, "falling-chirp", "chirp",
     {"a falling chirp", "a downward chirp", "a chirp going down"}},
    {EventKind::kNoiseBurst, "noise-burst", "noise", {"a burst of noise", "a short noise burst", "a hiss of noise"}},
    {EventKind::kClickTrain, "click-train", "clicks", {"repeated clicks", "a train of clicks", "rapid clicks"}},
    {EventKind::kSilence, "silence", "silence", {"silence", "a pause of silence", "a moment of silence"}},
}};

constexpr std::array<const char*, 3> kConnectors = {"then", "followed by", "and then"};

const Phrasing& phrasing(EventKind kind) { return kCatalog[static_cast<std::size_t>(kind)]; }

constexpr double kFade = 0.01;         // seconds of raised-cosine fade
constexpr double kBackground = 0.003;  // std of the noise floor

double envelope(double t, double duration) {
  const double edge = std::min(kFade, duration / 2.0);
  if (t < edge) return 0.5 - 0.5 * std::cos(std::numbers::pi * t / edge);
  if (t > duration - edge) return 0.5 - 0.5 * std::cos(std::numbers::pi * (duration - t) / edge);
  return 1.0;
}

}  // namespace

std::string to_string(EventKind kind) { return phrasing(kind).name; }
std::string event_lexeme(EventKind kind) { return phrasing(kind).lexeme; }

double SceneSpec::duration() const {
  double total = 0.0;
  for (const auto& e : events) total += e.duration;
  return total;
}

SceneSpec sample_scene(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> count(2, 4);
  std::uniform_int_distribution<std::size_t> kind_dist(0, kEventKinds - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SceneSpec spec;
  const std::size_t n = count(rng);
  const double total = 2.0 + 4.0 * unit(rng);
  std::vector<double> weights(n);
  double weight_sum = 0.0;
  for (double& w : weights) {
    w = 0.5 + unit(rng);
    weight_sum += w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    SceneEvent e;
    do {
      e.kind = static_cast<EventKind>(kind_dist(rng));
    } while (!spec.events.empty() && spec.events.back().kind == e.kind);
    e.duration = total * weights[i] / weight_sum;
    switch (e.kind) {
      case EventKind::kLowTone:
        e.freq = 200.0 + 300.0 * unit(rng);
        e.amplitude = 0.4 + 0.2 * unit(rng);
        break;
      case EventKind::kHighTone:
        e.freq = 2000.0 + 2000.0 * unit(rng);
        e.amplitude = 0.3 + 0.2 * unit(rng);
        break;
      case EventKind::kRisingChirp:
        e.freq = 300.0 + 200.0 * unit(rng);
        e.freq_end = 2500.0 + 1000.0 * unit(rng);
        e.amplitude = 0.4;
        break;
      case EventKind::kFallingChirp:
        e.freq = 2500.0 + 1000.0 * unit(rng);
        e.freq_end = 300.0 + 200.0 * unit(rng);
        e.amplitude = 0.4;
        break;
      case EventKind::kNoiseBurst:
        e.amplitude = 0.2 + 0.1 * unit(rng);
        break;
      case EventKind::kClickTrain:
        e.rate = 8.0 + 12.0 * unit(rng);
        e.amplitude = 0.6;
        break;
      case EventKind::kSilence:
        break;
    }
    spec.events.push_back(e);
  }
  return spec;
}

audio::AudioClip render_scene(const SceneSpec& spec, std::mt19937_64& rng) {
  const double rate = kSynthRate;
  std::normal_distribution<double> gauss(0.0, 1.0);
  audio::AudioClip clip;
  clip.sample_rate = kSynthRate;

  for (const auto& e : spec.events) {
    const auto n = static_cast<std::size_t>(std::llround(e.duration * rate));
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      const double env = envelope(t, e.duration);
      double s = 0.0;
      switch (e.kind) {
        case EventKind::kLowTone:
        case EventKind::kHighTone:
          s = e.amplitude * env * std::sin(2.0 * std::numbers::pi * e.freq * t);
          break;
        case EventKind::kRisingChirp:
        case EventKind::kFallingChirp: {
          // exponential sweep, phase accumulated sample by sample
          const double f = e.freq * std::pow(e.freq_end / e.freq, t / e.duration);
          phase += 2.0 * std::numbers::pi * f / rate;
          s = e.amplitude * env * std::sin(phase);
          break;
        }
        case EventKind::kNoiseBurst:
          s = e.amplitude * env * gauss(rng);
          break;
        case EventKind::kClickTrain: {
          const double since = std::fmod(t * e.rate, 1.0) / e.rate;
          s = e.amplitude * std::exp(-since / 0.003) * std::sin(2.0 * std::numbers::pi * 1000.0 * since);
          break;
        }
        case EventKind::kSilence:
          break;
      }
      clip.samples.push_back(s);
    }
  }
  for (double& s : clip.samples) s = std::clamp(s + kBackground * gauss(rng), -1.0, 1.0);
  return clip;
}

std::string scene_caption(const SceneSpec& spec, std::size_t variant) {
  std::string out;
  for (std::size_t i = 0; i < spec.events.size(); ++i) {
    if (i > 0) {
      out += ' ';
      out += kConnectors[(variant + i - 1) % kConnectors.size()];
      out += ' ';
    }
    out += phrasing(spec.events[i].kind).phrases[(variant + i) % 3];
  }
  return out;
}

std::mt19937_64 clip_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

GeneratedClip generate_clip(std::uint64_t seed, std::size_t index, std::size_t captions_per_clip) {
  if (captions_per_clip < 1 || captions_per_clip > kMaxCaptionsPerClip) {
    throw ConfigError("captions per clip must be 1..5, got " + std::to_string(captions_per_clip));
  }
  auto rng = clip_rng(seed, index);
  GeneratedClip out;
  out.spec = sample_scene(rng);
  out.audio = render_scene(out.spec, rng);
  char name[32];
  std::snprintf(name, sizeof(name), "clip_%04zu.wav", index);
  out.record.clip_id = name;
  for (std::size_t v = 0; v < captions_per_clip; ++v) out.record.captions.push_back(scene_caption(out.spec, v));
  return out;
}

CorpusManifest generate_corpus(const std::filesystem::path& out_dir, std::size_t n_clips,
                               std::size_t captions_per_clip, std::uint64_t seed) {
  if (n_clips == 0) throw ConfigError("corpus needs at least one clip");
  const auto wav_dir = out_dir / "wav";
  std::error_code ec;
  std::filesystem::create_directories(wav_dir, ec);
  if (ec) throw IoError("cannot create " + wav_dir.string() + ": " + ec.message());

  CorpusManifest manifest;
  manifest.split = "train";
  manifest.records.resize(n_clips);
  std::vector<std::string> failures(n_clips);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n_clips; ++i) {
    try {
      auto clip = generate_clip(seed, i, captions_per_clip);
      audio::write_wav16(wav_dir / clip.record.clip_id, clip.audio);
      manifest.records[i] = std::move(clip.record);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw IoError(f);
  }
  write_manifest_csv(out_dir / "manifest.csv", manifest);
  return manifest;
}

}  // namespace lhdff::data
