#pragma once

// Differentiable ops over Tensor. Each op validates shapes, computes the
// forward value and records a backward rule on the active tape.

#include <cstdint>
#include <random>
#include <vector>

#include "lhdff/tensor.hpp"

namespace lhdff::ops {

// Elementwise. `b` may match `a` or one of a's trailing suffixes, in which
// case it is broadcast over the leading axes of `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over one axis; the axis is removed from the result.
Tensor mean_axis(const Tensor& x, int axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);

// a[..., p, q] x b[..., q, r]. Batch axes must be equal, or b may be a
// plain matrix shared by every batch entry.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * weight[in, out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x[B,Cin,H,W], kernel[Cout,Cin,3,3], bias[Cout] -> [B,Cout,H,W].
// Stride 1, zero padding 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  double momentum = 0.1;
  double eps = 1e-5;
};
// Training mode normalises with batch statistics over (B,H,W) and updates
// the running statistics in place; eval mode uses the running statistics.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                    bool training);

// 2×2 window, stride 2. An odd trailing row/column is edge-replicated.
Tensor avg_pool2d(const Tensor& x);

// weight[V,d] rows gathered by ids -> [batch, steps, d].
Tensor embedding(const Tensor& weight, const std::vector<std::int64_t>& ids, std::size_t batch, std::size_t steps);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);

// Attention-score masking on scores[B,H,Tq,Tk]. Masked cells are replaced by
// -1e9 and receive no gradient. key_lengths (one per batch entry, or empty
// for "all valid") masks trailing keys; causal masks keys after the query.
inline constexpr double kMaskedScore = -1e9;
Tensor mask_scores(const Tensor& scores, bool causal, const std::vector<std::size_t>& key_lengths);

// Mean of -logp[b,t,target] over targets != ignore_id. logp is [B,T,V].
Tensor masked_nll(const Tensor& logp, const std::vector<std::int64_t>& targets, std::int64_t ignore_id);

}  // namespace lhdff::ops
