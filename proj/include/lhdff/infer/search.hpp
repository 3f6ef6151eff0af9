#pragma once

#include <cstddef>
#include <vector>

#include "lhdff/model/caption_model.hpp"

namespace lhdff::infer {

using model::TokenId;

// Source of next-token scores for a set of partial sequences.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  // prefixes all start with <sos> and share one length. Returns one score
  // row per prefix.
  virtual std::vector<std::vector<double>> next_scores(const std::vector<std::vector<TokenId>>& prefixes) = 0;
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // generated tokens; ends with <eos> if one was emitted
  double score = 0.0;           // sum of the chosen per-step scores
  bool finished = false;

  // tokens without the trailing <eos>
  std::vector<TokenId> caption() const;
};

// Argmax at every step (first index on ties) until <eos> or max_len tokens.
Hypothesis greedy_decode(StepScorer& scorer, std::size_t max_len);

struct BeamOptions {
  std::size_t width = 3;
  std::size_t max_len = 30;
  double length_penalty = 1.0;
  bool renormalize = false;  // log-softmax each score row before use
};

// score / len^alpha where len counts generated tokens including <eos>.
double ranking_score(const Hypothesis& h, double length_penalty);

// Keeps the best `width` expansions by cumulative score each step; an
// expansion ending in <eos> or reaching max_len leaves the beam as finished.
// Finished hypotheses are ranked by ranking_score, ties by lower token
// sequence. Returns at most `width` hypotheses.
std::vector<Hypothesis> beam_decode(StepScorer& scorer, const BeamOptions& opts);

// Scores prefixes with a trained model against one clip's encoder output.
class ModelScorer : public StepScorer {
 public:
  // memory must hold exactly one clip.
  ModelScorer(const model::CaptionModel& model, model::EncoderOutput memory);
  std::size_t vocab_size() const override;
  std::vector<std::vector<double>> next_scores(const std::vector<std::vector<TokenId>>& prefixes) override;

 private:
  const model::CaptionModel& model_;
  model::EncoderOutput memory_;
  std::size_t tiled_batch_ = 0;
  model::EncoderOutput tiled_;
};

// Repeats a single-clip encoder output `copies` times along the batch axis.
model::EncoderOutput tile_memory(const model::EncoderOutput& memory, std::size_t copies);

// Selects entries of a batched encoder output.
model::EncoderOutput slice_memory(const model::EncoderOutput& memory, std::size_t index);

// Eval-mode encoding of a list of clips.
model::EncoderOutput encode_clips(model::CaptionModel& model, const std::vector<const audio::MelSpectrogram*>& mels);

// Greedy decoding of every clip in a batched encoder output at once. Same
// result per clip as greedy_decode with a ModelScorer.
std::vector<Hypothesis> greedy_decode_batch(const model::CaptionModel& model, const model::EncoderOutput& memory,
                                            std::size_t max_len);

}  // namespace lhdff::infer
