#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lhdff/cli/run_config.hpp"
#include "lhdff/data/corpus.hpp"
#include "lhdff/metrics/metrics.hpp"
#include "lhdff/model/vocab.hpp"
#include "lhdff/train/trainer.hpp"

namespace lhdff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDiverged = 3;

// Entry point of the lhdff tool; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Split, vocabulary and features for one corpus.
struct PreparedData {
  model::Vocabulary vocab;
  std::vector<data::CaptionedClip> train;
  std::vector<data::CaptionedClip> val;
};
PreparedData prepare_data(const RunConfig& cfg, const data::CorpusManifest& manifest);

struct TrainedRun {
  std::vector<train::EpochRecord> log;
  metrics::Report report;  // greedy captions on val (train when val is empty)
};

// Trains cfg.model.variant with cfg.train.seed. With a non-empty out_dir the
// run config, vocabulary, checkpoints and metrics log are written there.
TrainedRun train_variant(const RunConfig& cfg, const PreparedData& data, const std::filesystem::path& out_dir,
                         const std::filesystem::path& resume, std::ostream& log);

metrics::Report evaluate_greedy(model::CaptionModel& model, const model::Vocabulary& vocab,
                                const std::vector<data::CaptionedClip>& clips);

struct VariantResult {
  model::Variant variant = model::Variant::kLhdff;
  bool ok = false;
  std::string error;
  std::vector<metrics::Report> per_seed;
  metrics::Report mean;
};

struct OrderingCheck {
  std::string claim;  // e.g. "lhdff >= baseline-high"
  double left = 0.0;
  double right = 0.0;
  bool holds = false;
};

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<VariantResult> rows;  // requested order
  std::vector<OrderingCheck> checks;
};

// Trains every variant once per seed on the same data.
AblationResult run_ablation(const RunConfig& base, const PreparedData& data, const std::vector<model::Variant>& variants,
                            const std::vector<std::uint64_t>& seeds, std::ostream& log);

std::string format_ablation_table(const AblationResult& result);
std::string ablation_json(const AblationResult& result);

}  // namespace lhdff::cli
