#include "lhdff/data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lhdff/audio/wav.hpp"
#include "lhdff/data/csv.hpp"
#include "lhdff/error.hpp"
#include "lhdff/text.hpp"

namespace lhdff::data {

CorpusManifest parse_manifest_csv(std::string_view text, std::string split) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw ParseError("manifest is empty", 1);
  const auto& header = rows.front().fields;

  std::ptrdiff_t id_col = -1;
  std::vector<std::size_t> caption_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == "file_name" || (name == "clip_id" && id_col < 0)) {
      id_col = static_cast<std::ptrdiff_t>(c);
    } else if (name.rfind("caption_", 0) == 0) {
      caption_cols.push_back(c);
    }
  }
  if (id_col < 0) throw ParseError("manifest header has no file_name column", rows.front().line);
  if (caption_cols.empty()) throw ParseError("manifest header has no caption_N column", rows.front().line);
  if (caption_cols.size() > kMaxCaptionsPerClip) {
    throw ParseError("manifest has more than " + std::to_string(kMaxCaptionsPerClip) + " caption columns",
                     rows.front().line);
  }

  CorpusManifest manifest;
  manifest.split = std::move(split);
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      throw ParseError("row has " + std::to_string(row.fields.size()) + " fields, header has " +
                           std::to_string(header.size()),
                       row.line);
    }
    ClipRecord rec;
    rec.clip_id = row.fields[static_cast<std::size_t>(id_col)];
    if (rec.clip_id.empty()) throw ParseError("empty file_name", row.line);
    if (!seen.insert(rec.clip_id).second) throw ParseError("duplicate clip id '" + rec.clip_id + "'", row.line);
    for (std::size_t c : caption_cols) {
      if (!row.fields[c].empty()) rec.captions.push_back(row.fields[c]);
    }
    if (rec.captions.empty()) throw ParseError("clip '" + rec.clip_id + "' has no caption", row.line);
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

CorpusManifest load_manifest_csv(const std::filesystem::path& path, std::string split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_manifest_csv(buf.str(), std::move(split));
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_manifest_csv(const CorpusManifest& manifest) {
  std::size_t columns = 1;
  for (const auto& r : manifest.records) columns = std::max(columns, r.captions.size());
  std::string out = "file_name";
  for (std::size_t c = 1; c <= columns; ++c) out += ",caption_" + std::to_string(c);
  out += "\n";
  for (const auto& r : manifest.records) {
    out += csv_escape(r.clip_id);
    for (std::size_t c = 0; c < columns; ++c) {
      out += ",";
      if (c < r.captions.size()) out += csv_escape(r.captions[c]);
    }
    out += "\n";
  }
  return out;
}

void write_manifest_csv(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << format_manifest_csv(manifest);
  if (!out) throw IoError("failed writing manifest " + path.string());
}

void check_disjoint(const std::vector<const CorpusManifest*>& splits) {
  std::map<std::string, std::string> owner;
  for (const auto* m : splits) {
    for (const auto& r : m->records) {
      const auto [it, inserted] = owner.emplace(r.clip_id, m->split);
      if (!inserted) {
        throw ConfigError("clip '" + r.clip_id + "' appears in both " + it->second + " and " + m->split + " splits");
      }
    }
  }
}

SplitPair split_manifest(const CorpusManifest& manifest, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  auto records = manifest.records;
  std::sort(records.begin(), records.end(), [](const ClipRecord& a, const ClipRecord& b) { return a.clip_id < b.clip_id; });
  std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(records.size())));
  if (records.size() > 0 && n_val >= records.size()) n_val = records.size() - 1;
  SplitPair out;
  out.train.split = "train";
  out.val.split = "val";
  const auto cut = records.begin() + static_cast<std::ptrdiff_t>(records.size() - n_val);
  out.train.records.assign(records.begin(), cut);
  out.val.records.assign(cut, records.end());
  return out;
}

model::Vocabulary build_vocab(const CorpusManifest& manifest, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  std::size_t captions = 0;
  for (const auto& r : manifest.records) {
    for (const auto& c : r.captions) {
      ++captions;
      for (auto& w : text::tokenize(c)) ++counts[std::move(w)];
    }
  }
  if (captions == 0 || counts.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (const auto& [word, count] : ranked) {
    if (count >= std::max<std::size_t>(1, min_count)) tokens.push_back(word);
  }
  return model::Vocabulary(tokens);
}

std::vector<CaptionedClip> load_clips(const CorpusManifest& manifest, const std::filesystem::path& audio_dir,
                                      const audio::MelConfig& mel_cfg) {
  std::vector<CaptionedClip> clips;
  clips.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    CaptionedClip clip;
    clip.clip_id = r.clip_id;
    clip.mel = audio::log_mel(audio::read_wav(audio_dir / r.clip_id), mel_cfg);
    for (const auto& c : r.captions) clip.captions.push_back(text::tokenize(c));
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace lhdff::data
