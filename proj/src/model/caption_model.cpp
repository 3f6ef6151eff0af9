#include "lhdff/model/caption_model.hpp"

#include <array>
#include <cmath>
#include <optional>

#include "lhdff/error.hpp"

namespace lhdff::model {

namespace {

constexpr std::array<std::pair<Variant, const char*>, 5> kVariantNames = {{
    {Variant::kLhdff, "lhdff"},
    {Variant::kFusion, "fusion"},
    {Variant::kNonfusion, "nonfusion"},
    {Variant::kFusionBlock2, "fusion-block2"},
    {Variant::kBaselineHigh, "baseline-high"},
}};

const char* kVariantRecord = "meta.variant";

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

Variant parse_variant(const std::string& text) {
  for (const auto& [v, name] : kVariantNames) {
    if (text == name) return v;
  }
  throw ConfigError("unknown variant '" + text + "' (expected lhdff, fusion, nonfusion, fusion-block2 or baseline-high)");
}

std::string to_string(Variant variant) {
  for (const auto& [v, name] : kVariantNames) {
    if (v == variant) return name;
  }
  return "lhdff";
}

DecoderMode decoder_mode(Variant variant) {
  switch (variant) {
    case Variant::kLhdff:
    case Variant::kFusionBlock2:
      return DecoderMode::kDualFusion;
    case Variant::kFusion:
      return DecoderMode::kSingleFusion;
    case Variant::kNonfusion:
      return DecoderMode::kDualNonfusion;
    case Variant::kBaselineHigh:
      return DecoderMode::kSingleHigh;
  }
  return DecoderMode::kDualFusion;
}

void check_pairing(const EncoderConfig& enc, DecoderMode mode) {
  switch (mode) {
    case DecoderMode::kDualFusion:
    case DecoderMode::kSingleFusion:
      if (!enc.low_branch || !enc.fusion_enabled) {
        throw ConfigError("fusion decoder needs an encoder with fusion enabled");
      }
      break;
    case DecoderMode::kDualNonfusion:
      if (!enc.low_branch || enc.fusion_enabled) {
        throw ConfigError("nonfusion decoder needs an encoder with a low branch and fusion disabled");
      }
      break;
    case DecoderMode::kSingleHigh:
      break;
  }
}

EncoderConfig ModelConfig::encoder_for_variant() const {
  EncoderConfig enc = encoder;
  switch (variant) {
    case Variant::kLhdff:
    case Variant::kFusion:
      enc.fusion_enabled = true;
      enc.low_branch = true;
      enc.low_tap_block = 3;
      break;
    case Variant::kFusionBlock2:
      enc.fusion_enabled = true;
      enc.low_branch = true;
      enc.low_tap_block = 2;
      break;
    case Variant::kNonfusion:
      enc.fusion_enabled = false;
      enc.low_branch = true;
      enc.low_tap_block = 3;
      break;
    case Variant::kBaselineHigh:
      enc.fusion_enabled = true;
      enc.low_branch = false;
      break;
  }
  return enc;
}

std::size_t ModelConfig::width() const { return encoder_for_variant().out_dim(); }

std::size_t ModelConfig::ffn_width() const {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(decoder.ffn_dim) * encoder.width_scale)));
}

CaptionModel::CaptionModel(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed)
    : cfg_(cfg),
      encoder_([&] {
        auto rng = seeded(seed, 1);
        return Encoder(cfg.encoder_for_variant(), rng);
      }()),
      decoder_([&] {
        const std::size_t expected = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(static_cast<double>(cfg.decoder.d_model) * cfg.encoder.width_scale)));
        if (expected != cfg.width()) {
          throw ConfigError("decoder d_model " + std::to_string(expected) + " must equal encoder fusion width " +
                            std::to_string(cfg.width()));
        }
        check_pairing(cfg.encoder_for_variant(), decoder_mode(cfg.variant));
        auto rng = seeded(seed, 2);
        return DualDecoder(cfg.decoder, cfg.width(), cfg.ffn_width(), vocab_size, decoder_mode(cfg.variant), rng);
      }()) {
  encoder_.collect(params_);
  decoder_.collect(params_);
}

EncoderOutput CaptionModel::encode(const Tensor& mel, bool training, const std::vector<std::size_t>& input_frames) {
  return encoder_.encode(mel, training, input_frames);
}

FusedLogProbs CaptionModel::decode(const EncoderOutput& memory, const TokenBatch& tokens, bool training,
                                   std::mt19937_64& rng) const {
  return decoder_(memory, tokens, training, rng);
}

std::vector<checkpoint::Record> CaptionModel::export_records() const {
  std::vector<checkpoint::Record> records;
  records.push_back({kVariantRecord, {1}, {static_cast<double>(static_cast<int>(cfg_.variant))}});
  for (const auto& e : params_.entries()) {
    records.push_back({e.name, e.tensor.shape(), std::vector<double>(e.tensor.data().begin(), e.tensor.data().end())});
  }
  return records;
}

std::optional<Variant> checkpoint_variant(const std::vector<checkpoint::Record>& records) {
  const auto* meta = checkpoint::find(records, kVariantRecord);
  if (meta == nullptr || meta->data.size() != 1) return std::nullopt;
  const int code = static_cast<int>(meta->data[0]);
  if (code < 0 || code >= static_cast<int>(kVariantNames.size())) return std::nullopt;
  return static_cast<Variant>(code);
}

void CaptionModel::import_records(const std::vector<checkpoint::Record>& records) {
  if (const auto stored = checkpoint_variant(records); stored && *stored != cfg_.variant) {
    throw ConfigError("checkpoint variant " + to_string(*stored) + " does not match model variant " +
                      to_string(cfg_.variant));
  }
  for (const auto& e : params_.entries()) {
    const auto* r = checkpoint::find(records, e.name);
    if (r == nullptr) throw ConfigError("checkpoint is missing parameter " + e.name);
    if (r->shape != e.tensor.shape()) {
      throw DimensionError("checkpoint parameter " + e.name + " has shape " + shape_str(r->shape) + ", model expects " +
                           shape_str(e.tensor.shape()));
    }
  }
  for (const auto& r : records) {
    if (r.name.rfind("opt.", 0) == 0 || r.name.rfind("meta.", 0) == 0) continue;
    if (params_.find(r.name) == nullptr) throw ConfigError("checkpoint has unknown parameter " + r.name);
  }
  for (const auto& e : params_.entries()) {
    const auto* r = checkpoint::find(records, e.name);
    Tensor t = e.tensor;
    std::copy(r->data.begin(), r->data.end(), t.mutable_data().begin());
  }
}

}  // namespace lhdff::model
