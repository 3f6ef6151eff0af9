#include "lhdff/train/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "lhdff/audio/augment.hpp"
#include "lhdff/error.hpp"
#include "lhdff/infer/search.hpp"
#include "lhdff/metrics/metrics.hpp"
#include "lhdff/train/loss.hpp"

namespace lhdff::train {

namespace {

constexpr std::uint64_t kShuffleStream = ~std::uint64_t{0};

std::size_t count_targets(const std::vector<model::TokenId>& targets) {
  return static_cast<std::size_t>(
      std::count_if(targets.begin(), targets.end(), [](model::TokenId t) { return t != model::Vocabulary::kPad; }));
}

// 64-bit values stored as two exact 32-bit halves.
std::vector<double> split_u64(std::uint64_t v) {
  return {static_cast<double>(v & 0xffffffffu), static_cast<double>(v >> 32)};
}

std::uint64_t join_u64(const std::vector<double>& halves) {
  return static_cast<std::uint64_t>(halves.at(0)) | (static_cast<std::uint64_t>(halves.at(1)) << 32);
}

const checkpoint::Record& require(const std::vector<checkpoint::Record>& records, const std::string& name) {
  const auto* r = checkpoint::find(records, name);
  if (r == nullptr || r->data.empty()) throw ConfigError("checkpoint has no training state (" + name + ")");
  return *r;
}

}  // namespace

std::string to_json_line(const EpochRecord& record) {
  nlohmann::ordered_json j;
  j["epoch"] = record.epoch;
  j["lr"] = record.lr;
  j["train_loss"] = record.train_loss;
  j["eval_loss"] = record.eval_loss ? nlohmann::ordered_json(*record.eval_loss) : nlohmann::ordered_json(nullptr);
  j["bleu1"] = record.bleu1 ? nlohmann::ordered_json(*record.bleu1) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),  static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    static_cast<std::uint32_t>(batch), static_cast<std::uint32_t>(batch >> 32)};
  return std::mt19937_64(seq);
}

Trainer::Trainer(model::CaptionModel& model, const model::Vocabulary& vocab, TrainConfig cfg,
                 std::vector<data::CaptionedClip> train, std::vector<data::CaptionedClip> val, TrainerOptions opts)
    : model_(model),
      vocab_(vocab),
      cfg_(cfg),
      opts_(std::move(opts)),
      train_(std::move(train)),
      val_(std::move(val)),
      adam_(model.parameters(), AdamConfig{cfg.beta1, cfg.beta2, cfg.adam_eps}) {
  cfg_.validate();
  if (vocab_.size() != model_.vocab_size()) {
    throw ConfigError("vocabulary has " + std::to_string(vocab_.size()) + " tokens, model expects " +
                      std::to_string(model_.vocab_size()));
  }
  if (train_.empty()) throw ConfigError("training set is empty");
  auto build = [&](const std::vector<data::CaptionedClip>& clips, std::vector<Example>& out) {
    for (std::size_t i = 0; i < clips.size(); ++i) {
      for (const auto& caption : clips[i].captions) out.push_back({i, vocab_.encode(caption)});
    }
  };
  build(train_, examples_);
  build(val_.empty() ? train_ : val_, val_examples_);
  if (examples_.empty()) throw ConfigError("training clips carry no captions");
}

double Trainer::train_batch(const std::vector<std::size_t>& batch, std::mt19937_64& rng, double lr,
                            std::size_t& tokens) {
  std::vector<audio::MelSpectrogram> augmented;
  std::vector<const audio::MelSpectrogram*> mels;
  std::vector<std::vector<model::TokenId>> captions;
  for (std::size_t idx : batch) {
    mels.push_back(&train_[examples_[idx].clip].mel);
    captions.push_back(examples_[idx].tokens);
  }
  if (cfg_.augment) {
    std::vector<audio::MelSpectrogram> originals;
    for (const auto* m : mels) originals.push_back(*m);
    augmented = audio::spec_augment(originals, cfg_.augment_policy, rng);
    for (std::size_t i = 0; i < mels.size(); ++i) mels[i] = &augmented[i];
  }
  const auto stacked = model::stack_mels(mels, model_.config().encoder.fixed_frames);
  const auto tf = make_teacher_forcing(captions, model_.decoder().max_len());

  model_.parameters().zero_grad();
  const auto memory = model_.encode(stacked.mel, true, stacked.frames);
  const auto probs = model_.decode(memory, tf.inputs, true, rng);
  const Tensor loss = fused_ce_loss(probs, tf.targets);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    Tape::active().clear();
    throw NumericError("training loss diverged (" + std::to_string(value) + ") in epoch " + std::to_string(epoch_));
  }
  backward(loss);
  adam_.clip_grad_norm(cfg_.grad_clip_norm);
  adam_.step(lr);
  tokens = count_targets(tf.targets);
  return value;
}

EpochRecord Trainer::run_epoch() {
  EpochRecord record;
  record.epoch = epoch_;
  record.lr = lr_at(epoch_, cfg_);

  std::vector<std::size_t> order(examples_.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_rng = step_rng(cfg_.seed, epoch_, kShuffleStream);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  double weighted = 0.0;
  std::size_t total_tokens = 0;
  for (std::size_t start = 0, b = 0; start < order.size(); start += cfg_.batch_size, ++b) {
    const std::size_t stop = std::min(order.size(), start + cfg_.batch_size);
    const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    auto rng = step_rng(cfg_.seed, epoch_, b);
    std::size_t tokens = 0;
    const double loss = train_batch(batch, rng, record.lr, tokens);
    step_losses_.push_back(loss);
    weighted += loss * static_cast<double>(tokens);
    total_tokens += tokens;
  }
  record.train_loss = weighted / static_cast<double>(total_tokens);

  const bool last = epoch_ + 1 == cfg_.epochs;
  if (opts_.eval_every > 0 && ((epoch_ + 1) % opts_.eval_every == 0 || last)) {
    record.eval_loss = eval_loss();
    record.bleu1 = eval_bleu1();
  }
  ++epoch_;
  write_epoch_outputs(record);
  return record;
}

std::vector<EpochRecord> Trainer::run() {
  std::vector<EpochRecord> records;
  while (epoch_ < cfg_.epochs) records.push_back(run_epoch());
  if (!opts_.out_dir.empty()) save(opts_.out_dir / "final.bin");
  return records;
}

double Trainer::eval_loss() {
  NoGradGuard no_grad;
  const auto& clips = val_.empty() ? train_ : val_;
  std::mt19937_64 unused(0);
  double weighted = 0.0;
  std::size_t total = 0;
  const std::size_t step = std::max<std::size_t>(1, opts_.eval_batch);
  for (std::size_t start = 0; start < val_examples_.size(); start += step) {
    const std::size_t stop = std::min(val_examples_.size(), start + step);
    std::vector<const audio::MelSpectrogram*> mels;
    std::vector<std::vector<model::TokenId>> captions;
    for (std::size_t i = start; i < stop; ++i) {
      mels.push_back(&clips[val_examples_[i].clip].mel);
      captions.push_back(val_examples_[i].tokens);
    }
    const auto stacked = model::stack_mels(mels, model_.config().encoder.fixed_frames);
    const auto tf = make_teacher_forcing(captions, model_.decoder().max_len());
    const auto memory = model_.encode(stacked.mel, false, stacked.frames);
    const double loss = fused_ce_loss(model_.decode(memory, tf.inputs, false, unused), tf.targets).item();
    const std::size_t tokens = count_targets(tf.targets);
    weighted += loss * static_cast<double>(tokens);
    total += tokens;
  }
  return weighted / static_cast<double>(total);
}

double Trainer::eval_bleu1() {
  const auto& clips = val_.empty() ? train_ : val_;
  std::vector<metrics::EvalPair> pairs;
  const std::size_t step = std::max<std::size_t>(1, opts_.eval_batch);
  for (std::size_t start = 0; start < clips.size(); start += step) {
    const std::size_t stop = std::min(clips.size(), start + step);
    std::vector<const audio::MelSpectrogram*> mels;
    for (std::size_t i = start; i < stop; ++i) mels.push_back(&clips[i].mel);
    const auto memory = infer::encode_clips(model_, mels);
    const auto hyps = infer::greedy_decode_batch(model_, memory, model_.decoder().max_len());
    for (std::size_t i = start; i < stop; ++i) {
      pairs.push_back({vocab_.decode(hyps[i - start].caption()), clips[i].captions});
    }
  }
  return metrics::bleu(pairs, 1);
}

std::vector<checkpoint::Record> Trainer::state_records() const {
  auto records = model_.export_records();
  auto opt = adam_.export_records();
  records.insert(records.end(), opt.begin(), opt.end());
  records.push_back({"opt.epoch", {1}, {static_cast<double>(epoch_)}});
  records.push_back({"opt.seed", {2}, split_u64(cfg_.seed)});
  records.push_back({"opt.best_bleu1", {1}, {best_bleu1_}});
  return records;
}

void Trainer::restore(const std::vector<checkpoint::Record>& records) {
  const auto& seed = require(records, "opt.seed");
  if (seed.data.size() != 2 || join_u64(seed.data) != cfg_.seed) {
    throw ConfigError("checkpoint was trained with a different seed");
  }
  model_.import_records(records);
  adam_.import_records(records);
  epoch_ = static_cast<std::size_t>(require(records, "opt.epoch").data[0]);
  best_bleu1_ = require(records, "opt.best_bleu1").data[0];
}

void Trainer::save(const std::filesystem::path& path) const { checkpoint::write_file(path, state_records()); }

void Trainer::write_epoch_outputs(const EpochRecord& record) {
  if (opts_.out_dir.empty()) {
    if (record.bleu1 && *record.bleu1 > best_bleu1_) best_bleu1_ = *record.bleu1;
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(opts_.out_dir, ec);
  if (ec) throw IoError("cannot create " + opts_.out_dir.string() + ": " + ec.message());

  const bool improved = record.bleu1 && *record.bleu1 > best_bleu1_;
  if (improved) best_bleu1_ = *record.bleu1;
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%03zu.bin", record.epoch);
  save(opts_.out_dir / name);
  if (improved) save(opts_.out_dir / "best.bin");

  const auto log_path = opts_.out_dir / "metrics.jsonl";
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot append to " + log_path.string());
  log << to_json_line(record) << '\n';
  if (!log) throw IoError("failed writing " + log_path.string());
}

}  // namespace lhdff::train
