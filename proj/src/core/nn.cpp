#include "lhdff/nn.hpp"

#include <cmath>

#include "lhdff/error.hpp"
#include "lhdff/ops.hpp"

namespace lhdff::nn {

void ParameterSet::add(std::string name, const Tensor& tensor, ParamKind kind) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name " + name);
  entries_.push_back({std::move(name), tensor, kind});
}

const NamedTensor* ParameterSet::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.kind == ParamKind::kTrainable) n += e.tensor.numel();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  return uniform(std::move(shape), std::sqrt(3.0 / static_cast<double>(fan_in)), rng, true);
}

Linear Linear::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {fan_in_uniform({in, out}, in, rng), Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight, ParamKind::kTrainable);
  params.add(prefix + ".bias", bias, ParamKind::kTrainable);
}

LayerNorm LayerNorm::init(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }

void LayerNorm::collect(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".gamma", gamma, ParamKind::kTrainable);
  params.add(prefix + ".beta", beta, ParamKind::kTrainable);
}

MultiHeadAttention MultiHeadAttention::init(std::size_t width, std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  MultiHeadAttention mha;
  mha.query = Linear::init(width, width, rng);
  mha.key = Linear::init(width, width, rng);
  mha.value = Linear::init(width, width, rng);
  mha.out = Linear::init(width, width, rng);
  mha.heads = heads;
  return mha;
}

AttentionResult MultiHeadAttention::operator()(const Tensor& q, const Tensor& k, const Tensor& v,
                                               const AttentionMask& mask) const {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw DimensionError("attention inputs must be [B,T,D]: " + shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                         ", " + shape_str(v.shape()));
  }
  const std::size_t batch = q.dim(0);
  const std::size_t tq = q.dim(1);
  const std::size_t tk = k.dim(1);
  const std::size_t width = q.dim(2);
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (k.dim(0) != batch || v.dim(0) != batch || v.dim(1) != tk) {
    throw DimensionError("attention key/value extents " + shape_str(k.shape()) + ", " + shape_str(v.shape()) +
                         " do not match query " + shape_str(q.shape()));
  }
  const std::size_t head_dim = width / heads;

  Tensor qh = ops::permute(ops::reshape(query(q), {batch, tq, heads, head_dim}), {0, 2, 1, 3});
  Tensor kt = ops::permute(ops::reshape(key(k), {batch, tk, heads, head_dim}), {0, 2, 3, 1});
  Tensor vh = ops::permute(ops::reshape(value(v), {batch, tk, heads, head_dim}), {0, 2, 1, 3});

  Tensor scores = ops::scale(ops::matmul(qh, kt), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  if (mask.causal || !mask.key_lengths.empty()) scores = ops::mask_scores(scores, mask.causal, mask.key_lengths);
  Tensor probs = ops::softmax(scores);
  Tensor context = ops::matmul(probs, vh);  // [B,H,Tq,dh]
  Tensor merged = ops::reshape(ops::permute(context, {0, 2, 1, 3}), {batch, tq, width});
  return {out(merged), probs};
}

void MultiHeadAttention::collect(ParameterSet& params, const std::string& prefix) const {
  query.collect(params, prefix + ".query");
  key.collect(params, prefix + ".key");
  value.collect(params, prefix + ".value");
  out.collect(params, prefix + ".out");
}

}  // namespace lhdff::nn
