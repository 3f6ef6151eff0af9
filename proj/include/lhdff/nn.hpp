#pragma once

// Parameter bookkeeping and the attention block shared by both decoders.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lhdff/tensor.hpp"

namespace lhdff::nn {

enum class ParamKind {
  kTrainable,
  kFrozen,  // saved, never updated (e.g. the word embedding)
  kBuffer,  // saved, updated outside the optimizer (batch-norm statistics)
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  ParamKind kind = ParamKind::kTrainable;
};

// Ordered name -> tensor registry. Tensors are shared handles, so the
// registry aliases the module's own storage.
class ParameterSet {
 public:
  void add(std::string name, const Tensor& tensor, ParamKind kind);
  const std::vector<NamedTensor>& entries() const { return entries_; }
  const NamedTensor* find(const std::string& name) const;
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<NamedTensor> entries_;
};

// Uniform in [-bound, bound].
Tensor uniform(Shape shape, double bound, std::mt19937_64& rng, bool requires_grad = true);
// bound = sqrt(3 / fan_in)
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& params, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm init(std::size_t width);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& params, const std::string& prefix) const;
};

struct AttentionMask {
  bool causal = false;
  std::vector<std::size_t> key_lengths;  // per batch entry; empty = all keys valid
};

struct AttentionResult {
  Tensor output;  // [B,Tq,D]
  Tensor probs;   // [B,H,Tq,Tk]
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear out;
  std::size_t heads = 4;

  static MultiHeadAttention init(std::size_t width, std::size_t heads, std::mt19937_64& rng);
  // Scaled dot-product attention per head (scale 1/sqrt(width/heads)),
  // heads concatenated, then the output projection.
  AttentionResult operator()(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask) const;
  void collect(ParameterSet& params, const std::string& prefix) const;
};

}  // namespace lhdff::nn
