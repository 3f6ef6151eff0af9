#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lhdff/audio/mel.hpp"
#include "lhdff/model/caption_model.hpp"
#include "lhdff/train/config.hpp"

namespace lhdff::cli {

// Everything a run needs, stored as flat "key = value" lines.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  audio::MelConfig mel;
  std::filesystem::path corpus;      // manifest CSV
  std::filesystem::path audio_dir;   // empty: <manifest dir>/wav
  std::filesystem::path out_dir;
  std::filesystem::path embeddings;  // optional pretrained word vectors
  double val_fraction = 0.1;
  std::size_t min_count = 1;
  std::size_t eval_every = 1;

  // Sets one key from its text form. Throws ConfigError on unknown keys or
  // malformed values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // One line per key in keys() order; parse(serialize()) == *this.
  std::string serialize() const;
  // Lines "key = value"; '#' starts a comment. Later lines win.
  static RunConfig parse(std::string_view text);
  // Applies the lines of `text` on top of the current values.
  void merge(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::filesystem::path resolved_audio_dir() const;
  void validate() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace lhdff::cli
