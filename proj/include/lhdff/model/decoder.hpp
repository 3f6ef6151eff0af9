#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lhdff/model/encoder.hpp"
#include "lhdff/model/vocab.hpp"
#include "lhdff/nn.hpp"

namespace lhdff::model {

struct DecoderConfig {
  std::size_t d_model = 128;  // scaled by the encoder's width_scale
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t ffn_dim = 512;  // scaled by the encoder's width_scale
  std::size_t max_len = 30;
  double dropout = 0.1;
  double embedding_init = 0.1;  // W ~ U(-0.1, 0.1)
};

enum class DecoderMode {
  kDualFusion,     // TD1 <- x_fusion, TD2 <- x_high
  kSingleFusion,   // one decoder over x_fusion
  kSingleHigh,     // one decoder over x_high
  kDualNonfusion,  // TD1 <- aligned x_low, TD2 <- x_high
};

bool is_dual(DecoderMode mode);

// Log-probabilities per decoder and their elementwise sum. For single
// decoder modes td2 is undefined and fusion aliases td1.
struct FusedLogProbs {
  Tensor td1;     // [B, T, m]
  Tensor td2;     // [B, T, m]
  Tensor fusion;  // [B, T, m], not normalised
};

// A batch of equal-length token rows, row-major [batch, steps].
struct TokenBatch {
  std::vector<TokenId> ids;
  std::size_t batch = 0;
  std::size_t steps = 0;
};

// Post-norm transformer decoder stack followed by a vocabulary head and
// log-softmax.
class TransformerDecoder {
 public:
  TransformerDecoder(std::size_t width, std::size_t ffn, std::size_t heads, std::size_t layers, std::size_t vocab,
                     double dropout, std::mt19937_64& rng);

  // embedded [B,T,d], memory [B,S,d] -> log-probs [B,T,m]
  Tensor operator()(const Tensor& embedded, const Tensor& memory, const std::vector<std::size_t>& memory_lengths,
                    bool training, std::mt19937_64& rng) const;

  void collect(nn::ParameterSet& params, const std::string& prefix) const;
  nn::Linear& head() { return head_; }

 private:
  struct Layer {
    nn::MultiHeadAttention self_attn;
    nn::MultiHeadAttention cross_attn;
    nn::LayerNorm norm1;
    nn::LayerNorm norm2;
    nn::LayerNorm norm3;
    nn::Linear ff1;
    nn::Linear ff2;
  };
  std::vector<Layer> layers_;
  nn::Linear head_;
  double dropout_;
};

// Shared frozen word embedding feeding one or two transformer decoders whose
// log-softmax outputs are summed.
class DualDecoder {
 public:
  DualDecoder(const DecoderConfig& cfg, std::size_t width, std::size_t ffn, std::size_t vocab, DecoderMode mode,
              std::mt19937_64& rng);

  DecoderMode mode() const { return mode_; }
  std::size_t vocab_size() const { return vocab_; }
  std::size_t width() const { return width_; }
  std::size_t max_len() const { return cfg_.max_len; }

  // W[ids] * sqrt(d), no positions.
  Tensor embed_tokens(const TokenBatch& tokens) const;
  // embed_tokens + sinusoidal positions.
  Tensor embed(const TokenBatch& tokens) const;

  FusedLogProbs operator()(const EncoderOutput& memory, const TokenBatch& tokens, bool training,
                           std::mt19937_64& rng) const;

  // Replaces embedding rows from a text file of "token v1 ... vd" lines
  // (an optional "count dim" header is skipped). Returns rows replaced.
  std::size_t load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab);

  const Tensor& embedding() const { return embedding_; }
  TransformerDecoder& td1() { return *td1_; }
  TransformerDecoder* td2() { return td2_ ? &*td2_ : nullptr; }

  void collect(nn::ParameterSet& params) const;

 private:
  DecoderConfig cfg_;
  std::size_t width_;
  std::size_t vocab_;
  DecoderMode mode_;
  Tensor embedding_;  // [m, d], frozen
  Tensor positions_;  // [max_len, d]
  std::optional<TransformerDecoder> td1_;
  std::optional<TransformerDecoder> td2_;
};

}  // namespace lhdff::model
