#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lhdff/checkpoint.hpp"
#include "lhdff/data/corpus.hpp"
#include "lhdff/model/caption_model.hpp"
#include "lhdff/model/vocab.hpp"
#include "lhdff/train/adam.hpp"
#include "lhdff/train/config.hpp"

namespace lhdff::train {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
  std::optional<double> bleu1;
};

std::string to_json_line(const EpochRecord& record);

struct TrainerOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::size_t eval_every = 1;     // 0 turns evaluation off
  std::size_t eval_batch = 16;
};

// Per-step RNG stream: the same (seed, epoch, batch) always yields the same
// generator, which is what makes resumed runs replay exactly.
std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch);

class Trainer {
 public:
  // Every caption of every training clip is one example. With an empty val
  // set, evaluation runs on the training clips.
  Trainer(model::CaptionModel& model, const model::Vocabulary& vocab, TrainConfig cfg,
          std::vector<data::CaptionedClip> train, std::vector<data::CaptionedClip> val, TrainerOptions opts = {});

  // Runs the next epoch; writes its checkpoint and log line when out_dir is set.
  EpochRecord run_epoch();
  // Runs epochs until cfg.epochs, then writes final.bin.
  std::vector<EpochRecord> run();

  std::size_t next_epoch() const { return epoch_; }
  std::size_t example_count() const { return examples_.size(); }
  // Loss of every optimizer step so far in this process.
  const std::vector<double>& step_losses() const { return step_losses_; }

  double eval_loss();
  double eval_bleu1();

  // Model, optimizer moments and counters.
  std::vector<checkpoint::Record> state_records() const;
  void restore(const std::vector<checkpoint::Record>& records);
  void save(const std::filesystem::path& path) const;

 private:
  struct Example {
    std::size_t clip;
    std::vector<model::TokenId> tokens;
  };

  double train_batch(const std::vector<std::size_t>& batch, std::mt19937_64& rng, double lr, std::size_t& tokens);
  void write_epoch_outputs(const EpochRecord& record);

  model::CaptionModel& model_;
  const model::Vocabulary& vocab_;
  TrainConfig cfg_;
  TrainerOptions opts_;
  std::vector<data::CaptionedClip> train_;
  std::vector<data::CaptionedClip> val_;
  std::vector<Example> examples_;
  std::vector<Example> val_examples_;
  Adam adam_;
  std::size_t epoch_ = 0;
  double best_bleu1_ = -1.0;
  std::vector<double> step_losses_;
};

}  // namespace lhdff::train
