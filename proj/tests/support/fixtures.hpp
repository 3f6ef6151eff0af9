#pragma once

#include <cstdint>
#include <vector>

#include "lhdff/data/corpus.hpp"
#include "lhdff/model/caption_model.hpp"
#include "lhdff/train/config.hpp"

namespace lhdff::testing {

struct TinyCorpus {
  data::CorpusManifest manifest;
  model::Vocabulary vocab;
  std::vector<data::CaptionedClip> clips;
};

// Synthetic clips rendered in memory, no files involved.
TinyCorpus synthetic_clips(std::size_t n, std::uint64_t seed, std::size_t captions_per_clip);

// 1/8-width model with the acceptance overfit settings.
model::ModelConfig tiny_model_config();
train::TrainConfig overfit_train_config();

}  // namespace lhdff::testing
