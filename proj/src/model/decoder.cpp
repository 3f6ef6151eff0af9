#include "lhdff/model/decoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lhdff/error.hpp"
#include "lhdff/ops.hpp"

namespace lhdff::model {

bool is_dual(DecoderMode mode) { return mode == DecoderMode::kDualFusion || mode == DecoderMode::kDualNonfusion; }

TransformerDecoder::TransformerDecoder(std::size_t width, std::size_t ffn, std::size_t heads, std::size_t layers,
                                       std::size_t vocab, double dropout, std::mt19937_64& rng)
    : dropout_(dropout) {
  if (layers == 0) throw ConfigError("decoder needs at least one layer");
  for (std::size_t l = 0; l < layers; ++l) {
    Layer layer;
    layer.self_attn = nn::MultiHeadAttention::init(width, heads, rng);
    layer.cross_attn = nn::MultiHeadAttention::init(width, heads, rng);
    layer.norm1 = nn::LayerNorm::init(width);
    layer.norm2 = nn::LayerNorm::init(width);
    layer.norm3 = nn::LayerNorm::init(width);
    layer.ff1 = nn::Linear::init(width, ffn, rng);
    layer.ff2 = nn::Linear::init(ffn, width, rng);
    layers_.push_back(std::move(layer));
  }
  head_ = nn::Linear::init(width, vocab, rng);
}

Tensor TransformerDecoder::operator()(const Tensor& embedded, const Tensor& memory,
                                      const std::vector<std::size_t>& memory_lengths, bool training,
                                      std::mt19937_64& rng) const {
  Tensor x = embedded;
  const nn::AttentionMask causal{true, {}};
  const nn::AttentionMask cross{false, memory_lengths};
  for (const Layer& layer : layers_) {
    Tensor sa = layer.self_attn(x, x, x, causal).output;
    x = layer.norm1(ops::add(x, ops::dropout(sa, dropout_, training, rng)));
    Tensor ca = layer.cross_attn(x, memory, memory, cross).output;
    x = layer.norm2(ops::add(x, ops::dropout(ca, dropout_, training, rng)));
    Tensor ff = layer.ff2(ops::relu(layer.ff1(x)));
    x = layer.norm3(ops::add(x, ops::dropout(ff, dropout_, training, rng)));
  }
  return ops::log_softmax(head_(x));
}

void TransformerDecoder::collect(nn::ParameterSet& params, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const std::string p = prefix + ".layer" + std::to_string(l);
    layer.self_attn.collect(params, p + ".self_attn");
    layer.cross_attn.collect(params, p + ".cross_attn");
    layer.norm1.collect(params, p + ".norm1");
    layer.norm2.collect(params, p + ".norm2");
    layer.norm3.collect(params, p + ".norm3");
    layer.ff1.collect(params, p + ".ff1");
    layer.ff2.collect(params, p + ".ff2");
  }
  head_.collect(params, prefix + ".head");
}

DualDecoder::DualDecoder(const DecoderConfig& cfg, std::size_t width, std::size_t ffn, std::size_t vocab,
                         DecoderMode mode, std::mt19937_64& rng)
    : cfg_(cfg), width_(width), vocab_(vocab), mode_(mode) {
  if (vocab < Vocabulary::kReserved) throw ConfigError("vocabulary must hold at least the four reserved tokens");
  if (cfg.max_len == 0) throw ConfigError("max_len must be positive");
  if (cfg.n_heads == 0 || width % cfg.n_heads != 0) {
    throw ConfigError("decoder width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(cfg.n_heads) + " heads");
  }
  embedding_ = nn::uniform({vocab, width}, cfg.embedding_init, rng, false);
  std::vector<double> pe(cfg.max_len * width);
  for (std::size_t pos = 0; pos < cfg.max_len; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) / rate;
      pe[pos * width + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  positions_ = Tensor({cfg.max_len, width}, std::move(pe));
  td1_.emplace(width, ffn, cfg.n_heads, cfg.n_layers, vocab, cfg.dropout, rng);
  if (is_dual(mode)) td2_.emplace(width, ffn, cfg.n_heads, cfg.n_layers, vocab, cfg.dropout, rng);
}

Tensor DualDecoder::embed_tokens(const TokenBatch& tokens) const {
  if (tokens.steps == 0 || tokens.batch == 0) throw DimensionError("empty token batch");
  if (tokens.steps > cfg_.max_len) {
    throw SequenceLengthError("token sequence of length " + std::to_string(tokens.steps) + " exceeds max_len " +
                              std::to_string(cfg_.max_len));
  }
  Tensor rows = ops::embedding(embedding_, tokens.ids, tokens.batch, tokens.steps);
  return ops::scale(rows, std::sqrt(static_cast<double>(width_)));
}

Tensor DualDecoder::embed(const TokenBatch& tokens) const {
  Tensor rows = embed_tokens(tokens);
  const auto pe = positions_.data().subspan(0, tokens.steps * width_);
  return ops::add(rows, Tensor({tokens.steps, width_}, std::vector<double>(pe.begin(), pe.end())));
}

FusedLogProbs DualDecoder::operator()(const EncoderOutput& memory, const TokenBatch& tokens, bool training,
                                      std::mt19937_64& rng) const {
  auto check_memory = [&](const Tensor& m, const char* name) {
    if (!m.defined()) throw ConfigError(std::string("decoder mode needs encoder output ") + name);
    if (m.rank() != 3 || m.dim(0) != tokens.batch || m.dim(2) != width_) {
      throw DimensionError(std::string(name) + " has shape " + shape_str(m.shape()) + ", expected [" +
                           std::to_string(tokens.batch) + ",T," + std::to_string(width_) + "]");
    }
  };
  const Tensor embedded = embed(tokens);
  const Tensor& first = mode_ == DecoderMode::kSingleHigh ? memory.x_high : memory.x_fusion;
  check_memory(first, mode_ == DecoderMode::kSingleHigh ? "x_high" : "x_fusion");

  FusedLogProbs out;
  out.td1 = (*td1_)(embedded, first, memory.valid_frames, training, rng);
  if (!td2_) {
    out.fusion = out.td1;
    return out;
  }
  check_memory(memory.x_high, "x_high");
  out.td2 = (*td2_)(embedded, memory.x_high, memory.valid_frames, training, rng);
  out.fusion = ops::add(out.td1, out.td2);
  return out;
}

std::size_t DualDecoder::load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab) {
  if (vocab.size() != vocab_) {
    throw ConfigError("vocabulary size " + std::to_string(vocab.size()) + " does not match embedding rows " +
                      std::to_string(vocab_));
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  auto table = embedding_.mutable_data();
  std::size_t replaced = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (line_no == 1 && values.size() == 1) continue;  // "count dim" header
    if (values.size() != width_) {
      throw ParseError("embedding for '" + token + "' has " + std::to_string(values.size()) + " values, expected " +
                           std::to_string(width_),
                       line_no);
    }
    if (!vocab.contains(token)) continue;
    const auto row = static_cast<std::size_t>(vocab.id(token));
    std::copy(values.begin(), values.end(), table.begin() + static_cast<std::ptrdiff_t>(row * width_));
    ++replaced;
  }
  return replaced;
}

void DualDecoder::collect(nn::ParameterSet& params) const {
  params.add("embed.W", embedding_, nn::ParamKind::kFrozen);
  td1_->collect(params, "dec1");
  if (td2_) td2_->collect(params, "dec2");
}

}  // namespace lhdff::model
