#pragma once

#include <cstddef>
#include <vector>

#include "lhdff/model/decoder.hpp"
#include "lhdff/model/vocab.hpp"
#include "lhdff/tensor.hpp"

namespace lhdff::train {

using model::TokenId;

// Teacher-forcing rows: input [sos, w1..wn, pad..], target [w1..wn, eos, pad..].
struct TeacherForcing {
  model::TokenBatch inputs;
  std::vector<TokenId> targets;  // [batch * steps]
};

// Captions longer than max_len - 1 words are truncated so input and target
// both fit in max_len steps.
TeacherForcing make_teacher_forcing(const std::vector<std::vector<TokenId>>& captions, std::size_t max_len);

// Mean over non-pad targets of -logp[t, y_t].
Tensor sequence_ce(const Tensor& logp, const std::vector<TokenId>& targets);

// Cross-entropy of the summed log-probabilities; equals sequence_ce(td1) +
// sequence_ce(td2) for dual decoders.
Tensor fused_ce_loss(const model::FusedLogProbs& probs, const std::vector<TokenId>& targets);

}  // namespace lhdff::train
