#include "lhdff/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lhdff/audio/augment.hpp"
#include "lhdff/error.hpp"

namespace lhdff::cli {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_unsigned(k, v));
          }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](const RunConfig& c) { return format_double(member(c)); },
          [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = parse_double(k, v); }};
}

template <typename Member>
Field bool_field(Member member) {
  return {[member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); },
          [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = parse_bool(k, v); }};
}

template <typename Member>
Field path_field(Member member) {
  return {[member](const RunConfig& c) { return member(c).string(); },
          [member](RunConfig& c, std::string_view, std::string_view v) { member(c) = std::filesystem::path(v); }};
}

#define LHDFF_MEMBER(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"variant",
       {[](const RunConfig& c) { return model::to_string(c.model.variant); },
        [](RunConfig& c, std::string_view, std::string_view v) { c.model.variant = model::parse_variant(std::string(v)); }}},
      {"seed", size_field(LHDFF_MEMBER(train.seed))},
      {"corpus", path_field(LHDFF_MEMBER(corpus))},
      {"audio_dir", path_field(LHDFF_MEMBER(audio_dir))},
      {"out_dir", path_field(LHDFF_MEMBER(out_dir))},
      {"embeddings", path_field(LHDFF_MEMBER(embeddings))},
      {"val_fraction", double_field(LHDFF_MEMBER(val_fraction))},
      {"min_count", size_field(LHDFF_MEMBER(min_count))},
      {"eval_every", size_field(LHDFF_MEMBER(eval_every))},
      // encoder
      {"width_scale", double_field(LHDFF_MEMBER(model.encoder.width_scale))},
      {"block1_channels", size_field(LHDFF_MEMBER(model.encoder.block_channels[0]))},
      {"block2_channels", size_field(LHDFF_MEMBER(model.encoder.block_channels[1]))},
      {"block3_channels", size_field(LHDFF_MEMBER(model.encoder.block_channels[2]))},
      {"block4_channels", size_field(LHDFF_MEMBER(model.encoder.block_channels[3]))},
      {"final_linear_dim", size_field(LHDFF_MEMBER(model.encoder.final_linear_dim))},
      {"fusion_dim", size_field(LHDFF_MEMBER(model.encoder.fusion_dim))},
      {"fixed_frames", size_field(LHDFF_MEMBER(model.encoder.fixed_frames))},
      {"align",
       {[](const RunConfig& c) { return model::to_string(c.model.encoder.align); },
        [](RunConfig& c, std::string_view, std::string_view v) {
          c.model.encoder.align = model::parse_align_mode(std::string(v));
        }}},
      // decoder
      {"d_model", size_field(LHDFF_MEMBER(model.decoder.d_model))},
      {"n_heads", size_field(LHDFF_MEMBER(model.decoder.n_heads))},
      {"n_layers", size_field(LHDFF_MEMBER(model.decoder.n_layers))},
      {"ffn_dim", size_field(LHDFF_MEMBER(model.decoder.ffn_dim))},
      {"max_len", size_field(LHDFF_MEMBER(model.decoder.max_len))},
      {"dropout", double_field(LHDFF_MEMBER(model.decoder.dropout))},
      {"embedding_init", double_field(LHDFF_MEMBER(model.decoder.embedding_init))},
      // training
      {"batch_size", size_field(LHDFF_MEMBER(train.batch_size))},
      {"epochs", size_field(LHDFF_MEMBER(train.epochs))},
      {"base_lr", double_field(LHDFF_MEMBER(train.base_lr))},
      {"warmup_epochs", size_field(LHDFF_MEMBER(train.warmup_epochs))},
      {"decay_every", size_field(LHDFF_MEMBER(train.decay_every))},
      {"decay_factor", double_field(LHDFF_MEMBER(train.decay_factor))},
      {"beta1", double_field(LHDFF_MEMBER(train.beta1))},
      {"beta2", double_field(LHDFF_MEMBER(train.beta2))},
      {"adam_eps", double_field(LHDFF_MEMBER(train.adam_eps))},
      {"grad_clip_norm", double_field(LHDFF_MEMBER(train.grad_clip_norm))},
      // augmentation
      {"augment", bool_field(LHDFF_MEMBER(train.augment))},
      {"mask_mode",
       {[](const RunConfig& c) { return audio::to_string(c.train.augment_policy.mode); },
        [](RunConfig& c, std::string_view, std::string_view v) {
          c.train.augment_policy.mode = audio::parse_mask_mode(std::string(v));
        }}},
      {"time_masks", size_field(LHDFF_MEMBER(train.augment_policy.time_masks))},
      {"max_time_width", size_field(LHDFF_MEMBER(train.augment_policy.max_time_width))},
      {"freq_masks", size_field(LHDFF_MEMBER(train.augment_policy.freq_masks))},
      {"max_freq_width", size_field(LHDFF_MEMBER(train.augment_policy.max_freq_width))},
      // features
      {"sample_rate", size_field(LHDFF_MEMBER(mel.sample_rate))},
      {"n_fft", size_field(LHDFF_MEMBER(mel.n_fft))},
      {"hop", size_field(LHDFF_MEMBER(mel.hop))},
      {"n_mels", size_field(LHDFF_MEMBER(mel.n_mels))},
      {"fmin", double_field(LHDFF_MEMBER(mel.fmin))},
      {"fmax", double_field(LHDFF_MEMBER(mel.fmax))},
  };
  return table;
}

#undef LHDFF_MEMBER

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string_view trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) { field(key).set(*this, key, trim(value)); }

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : fields()) out.push_back(entry.first);
    return out;
  }();
  return names;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  cfg.merge(text);
  return cfg;
}

void RunConfig::merge(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig cfg;
  cfg.merge_file(path);
  return cfg;
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    merge(buf.str());
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << serialize();
  if (!out) throw IoError("failed writing config " + path.string());
}

std::filesystem::path RunConfig::resolved_audio_dir() const {
  if (!audio_dir.empty()) return audio_dir;
  return corpus.parent_path() / "wav";
}

void RunConfig::validate() const {
  train.validate();
  model.encoder_for_variant().validate();
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (!(model.decoder.dropout >= 0.0 && model.decoder.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (mel.n_fft == 0 || mel.hop == 0 || mel.n_mels == 0 || mel.sample_rate == 0) {
    throw ConfigError("mel settings must be positive");
  }
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.serialize() == b.serialize(); }

}  // namespace lhdff::cli
