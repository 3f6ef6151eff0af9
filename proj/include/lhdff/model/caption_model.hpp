#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lhdff/checkpoint.hpp"
#include "lhdff/model/decoder.hpp"
#include "lhdff/model/encoder.hpp"

namespace lhdff::model {

// Architecture variants compared in the ablation.
enum class Variant {
  kLhdff,         // fused encoder (tap 3) + dual decoder
  kFusion,        // fused encoder (tap 3) + single decoder over x_fusion
  kNonfusion,     // unfused encoder, dual decoder over aligned x_low and x_high
  kFusionBlock2,  // fused encoder (tap 2) + dual decoder
  kBaselineHigh,  // single decoder over x_high, no low branch
};

Variant parse_variant(const std::string& text);
std::string to_string(Variant variant);
DecoderMode decoder_mode(Variant variant);

// Throws ConfigError when the decoder mode cannot consume the encoder's
// outputs (e.g. a nonfusion decoder on a fusing encoder).
void check_pairing(const EncoderConfig& enc, DecoderMode mode);

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  Variant variant = Variant::kLhdff;

  // Encoder flags implied by the variant.
  EncoderConfig encoder_for_variant() const;
  std::size_t width() const;
  std::size_t ffn_width() const;
};

class CaptionModel {
 public:
  CaptionModel(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return decoder_.vocab_size(); }
  Encoder& encoder() { return encoder_; }
  DualDecoder& decoder() { return decoder_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // mel: [B, T_in, F]; input_frames: unpadded T_in per entry (may be empty).
  EncoderOutput encode(const Tensor& mel, bool training, const std::vector<std::size_t>& input_frames = {});
  FusedLogProbs decode(const EncoderOutput& memory, const TokenBatch& tokens, bool training,
                       std::mt19937_64& rng) const;

  // Parameters and buffers plus a "meta.variant" record.
  std::vector<checkpoint::Record> export_records() const;
  // Strict: every model entry must be present with matching shape. Records
  // under "opt." are ignored. Throws ConfigError naming both variants on a
  // variant mismatch.
  void import_records(const std::vector<checkpoint::Record>& records);

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  DualDecoder decoder_;
  nn::ParameterSet params_;
};

// Reads meta.variant from checkpoint records, if present.
std::optional<Variant> checkpoint_variant(const std::vector<checkpoint::Record>& records);

}  // namespace lhdff::model
