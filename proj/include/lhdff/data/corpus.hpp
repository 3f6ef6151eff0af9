#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lhdff/audio/mel.hpp"
#include "lhdff/model/vocab.hpp"

namespace lhdff::data {

struct ClipRecord {
  std::string clip_id;  // the manifest's file_name
  std::vector<std::string> captions;
};

struct CorpusManifest {
  std::string split;
  std::vector<ClipRecord> records;
};

inline constexpr std::size_t kMaxCaptionsPerClip = 5;

// Columns: file_name (or clip_id), caption_1..caption_k with 1 <= k <= 5.
// Empty trailing caption cells are dropped; a record needs at least one
// caption. Duplicate ids are rejected.
CorpusManifest parse_manifest_csv(std::string_view text, std::string split = "train");
CorpusManifest load_manifest_csv(const std::filesystem::path& path, std::string split = "train");
std::string format_manifest_csv(const CorpusManifest& manifest);
void write_manifest_csv(const std::filesystem::path& path, const CorpusManifest& manifest);

// Throws ConfigError naming the first clip id found in more than one split.
void check_disjoint(const std::vector<const CorpusManifest*>& splits);

// Records sorted by clip id; the last ceil(fraction * N) become validation
// (at least one training record is kept). fraction 0 gives an empty split.
struct SplitPair {
  CorpusManifest train;
  CorpusManifest val;
};
SplitPair split_manifest(const CorpusManifest& manifest, double val_fraction);

// Reserved tokens first, then tokens by descending count, ties alphabetical.
// Tokens seen fewer than min_count times are left out (they encode to <unk>).
model::Vocabulary build_vocab(const CorpusManifest& manifest, std::size_t min_count = 1);

// A clip with its log-mel and tokenized captions.
struct CaptionedClip {
  std::string clip_id;
  audio::MelSpectrogram mel;
  std::vector<std::vector<std::string>> captions;
};

// Reads every record's WAV from audio_dir / clip_id.
std::vector<CaptionedClip> load_clips(const CorpusManifest& manifest, const std::filesystem::path& audio_dir,
                                      const audio::MelConfig& mel_cfg);

}  // namespace lhdff::data
