#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lhdff/audio/wav.hpp"
#include "lhdff/data/corpus.hpp"

namespace lhdff::data {

enum class EventKind {
  kLowTone,
  kHighTone,
  kRisingChirp,
  kFallingChirp,
  kNoiseBurst,
  kClickTrain,
  kSilence,
};
inline constexpr std::size_t kEventKinds = 7;

std::string to_string(EventKind kind);
// Word every caption of this event contains ("tone", "chirp", ...).
std::string event_lexeme(EventKind kind);

struct SceneEvent {
  EventKind kind = EventKind::kSilence;
  double duration = 1.0;   // seconds
  double freq = 0.0;       // tone frequency, or chirp start (Hz)
  double freq_end = 0.0;   // chirp end (Hz)
  double rate = 0.0;       // clicks per second
  double amplitude = 0.0;
};

struct SceneSpec {
  std::vector<SceneEvent> events;
  double duration() const;
};

inline constexpr std::uint32_t kSynthRate = 16000;

// 2-4 events, no kind twice in a row, 2-6 s in total.
SceneSpec sample_scene(std::mt19937_64& rng);

// Deterministic in (spec, rng state); the rng only drives noise.
audio::AudioClip render_scene(const SceneSpec& spec, std::mt19937_64& rng);

// Paraphrase `variant` (0-based) of the scene's caption. Depends only on the
// event kinds and their order.
std::string scene_caption(const SceneSpec& spec, std::size_t variant);

// RNG for clip `index` of a corpus generated with `seed`.
std::mt19937_64 clip_rng(std::uint64_t seed, std::uint64_t index);

struct GeneratedClip {
  SceneSpec spec;
  audio::AudioClip audio;
  ClipRecord record;
};
GeneratedClip generate_clip(std::uint64_t seed, std::size_t index, std::size_t captions_per_clip);

// Writes out_dir/wav/clip_NNNN.wav and out_dir/manifest.csv.
CorpusManifest generate_corpus(const std::filesystem::path& out_dir, std::size_t n_clips,
                               std::size_t captions_per_clip, std::uint64_t seed);

}  // namespace lhdff::data
