#include "fixtures.hpp"

#include "lhdff/audio/mel.hpp"
#include "lhdff/data/synth.hpp"
#include "lhdff/text.hpp"

namespace lhdff::testing {

TinyCorpus synthetic_clips(std::size_t n, std::uint64_t seed, std::size_t captions_per_clip) {
  TinyCorpus out;
  out.manifest.split = "train";
  for (std::size_t i = 0; i < n; ++i) {
    auto g = data::generate_clip(seed, i, captions_per_clip);
    data::CaptionedClip clip;
    clip.clip_id = g.record.clip_id;
    clip.mel = audio::log_mel(g.audio, audio::MelConfig{});
    for (const auto& c : g.record.captions) clip.captions.push_back(text::tokenize(c));
    out.clips.push_back(std::move(clip));
    out.manifest.records.push_back(std::move(g.record));
  }
  out.vocab = data::build_vocab(out.manifest);
  return out;
}

model::ModelConfig tiny_model_config() {
  model::ModelConfig cfg;
  cfg.encoder.width_scale = 0.125;
  cfg.decoder.dropout = 0.0;
  return cfg;
}

train::TrainConfig overfit_train_config() {
  train::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 200;
  cfg.warmup_epochs = 5;
  cfg.decay_every = 1000;
  cfg.base_lr = 0.002;
  cfg.augment = false;
  cfg.seed = 1;
  return cfg;
}

}  // namespace lhdff::testing
