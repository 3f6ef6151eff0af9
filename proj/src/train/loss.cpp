#include "lhdff/train/loss.hpp"

#include <algorithm>

#include "lhdff/error.hpp"
#include "lhdff/ops.hpp"

namespace lhdff::train {

using model::Vocabulary;

TeacherForcing make_teacher_forcing(const std::vector<std::vector<TokenId>>& captions, std::size_t max_len) {
  if (captions.empty()) throw DegenerateBatchError("teacher forcing needs at least one caption");
  if (max_len < 1) throw ConfigError("max_len must be positive");
  std::size_t longest = 0;
  for (const auto& c : captions) longest = std::max(longest, std::min(c.size(), max_len - 1));
  const std::size_t steps = longest + 1;

  TeacherForcing tf;
  tf.inputs.batch = captions.size();
  tf.inputs.steps = steps;
  tf.inputs.ids.assign(captions.size() * steps, Vocabulary::kPad);
  tf.targets.assign(captions.size() * steps, Vocabulary::kPad);
  for (std::size_t b = 0; b < captions.size(); ++b) {
    const std::size_t n = std::min(captions[b].size(), max_len - 1);
    TokenId* in = tf.inputs.ids.data() + b * steps;
    TokenId* out = tf.targets.data() + b * steps;
    in[0] = Vocabulary::kSos;
    for (std::size_t i = 0; i < n; ++i) {
      in[i + 1] = captions[b][i];
      out[i] = captions[b][i];
    }
    out[n] = Vocabulary::kEos;
  }
  return tf;
}

Tensor sequence_ce(const Tensor& logp, const std::vector<TokenId>& targets) {
  return ops::masked_nll(logp, targets, Vocabulary::kPad);
}

Tensor fused_ce_loss(const model::FusedLogProbs& probs, const std::vector<TokenId>& targets) {
  return sequence_ce(probs.fusion, targets);
}

}  // namespace lhdff::train
