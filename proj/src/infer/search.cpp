#include "lhdff/infer/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lhdff/error.hpp"

namespace lhdff::infer {

using model::Vocabulary;

std::vector<TokenId> Hypothesis::caption() const {
  std::vector<TokenId> out = tokens;
  if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
  return out;
}

namespace {

std::size_t argmax(const std::vector<double>& row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

void log_normalize(std::vector<double>& row) {
  const double peak = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double v : row) total += std::exp(v - peak);
  const double shift = peak + std::log(total);
  for (double& v : row) v -= shift;
}

std::vector<TokenId> with_sos(const std::vector<TokenId>& tokens) {
  std::vector<TokenId> p;
  p.reserve(tokens.size() + 1);
  p.push_back(Vocabulary::kSos);
  p.insert(p.end(), tokens.begin(), tokens.end());
  return p;
}

Tensor select_batch(const Tensor& t, const std::vector<std::size_t>& rows) {
  if (!t.defined()) return t;
  const std::size_t stride = t.numel() / t.dim(0);
  std::vector<double> out(rows.size() * stride);
  const auto src = t.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                out.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  Shape shape = t.shape();
  shape[0] = rows.size();
  return Tensor(std::move(shape), std::move(out));
}

model::EncoderOutput select_memory(const model::EncoderOutput& memory, const std::vector<std::size_t>& rows) {
  model::EncoderOutput out;
  out.x_high = select_batch(memory.x_high, rows);
  out.x_fusion = select_batch(memory.x_fusion, rows);
  out.x_low = select_batch(memory.x_low, rows);
  out.frames = memory.frames;
  for (std::size_t r : rows) out.valid_frames.push_back(memory.valid_frames.at(r));
  return out;
}

// Last-step fused log-probabilities for equal-length prefixes.
std::vector<std::vector<double>> last_rows(const model::CaptionModel& model, const model::EncoderOutput& memory,
                                           const std::vector<std::vector<TokenId>>& prefixes) {
  NoGradGuard no_grad;
  model::TokenBatch batch;
  batch.batch = prefixes.size();
  batch.steps = prefixes.front().size();
  for (const auto& p : prefixes) {
    if (p.size() != batch.steps) throw ContractError("prefixes in one scoring call must share a length");
    batch.ids.insert(batch.ids.end(), p.begin(), p.end());
  }
  std::mt19937_64 unused(0);
  const Tensor fused = model.decode(memory, batch, false, unused).fusion;
  const std::size_t vocab = fused.dim(2);
  const auto d = fused.data();
  std::vector<std::vector<double>> rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const auto begin = d.begin() + static_cast<std::ptrdiff_t>((b * batch.steps + batch.steps - 1) * vocab);
    rows[b].assign(begin, begin + static_cast<std::ptrdiff_t>(vocab));
  }
  return rows;
}

}  // namespace

Hypothesis greedy_decode(StepScorer& scorer, std::size_t max_len) {
  Hypothesis h;
  while (h.tokens.size() < max_len) {
    const auto row = scorer.next_scores({with_sos(h.tokens)}).at(0);
    const auto best = argmax(row);
    h.tokens.push_back(static_cast<TokenId>(best));
    h.score += row[best];
    if (static_cast<TokenId>(best) == Vocabulary::kEos) break;
  }
  h.finished = true;
  return h;
}

double ranking_score(const Hypothesis& h, double length_penalty) {
  const double len = static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
  return h.score / std::pow(len, length_penalty);
}

std::vector<Hypothesis> beam_decode(StepScorer& scorer, const BeamOptions& opts) {
  if (opts.width == 0) throw ConfigError("beam width must be at least 1");
  if (opts.max_len == 0) throw ConfigError("max_len must be positive");

  std::vector<Hypothesis> active(1);
  std::vector<Hypothesis> finished;
  const std::size_t vocab = scorer.vocab_size();

  while (!active.empty()) {
    std::vector<std::vector<TokenId>> prefixes;
    for (const auto& h : active) prefixes.push_back(with_sos(h.tokens));
    auto rows = scorer.next_scores(prefixes);

    struct Candidate {
      std::size_t parent;
      TokenId token;
      double score;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(active.size() * vocab);
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (opts.renormalize) log_normalize(rows[i]);
      for (std::size_t v = 0; v < vocab; ++v) {
        candidates.push_back({i, static_cast<TokenId>(v), active[i].score + rows[i][v]});
      }
    }
    // Active hypotheses are kept in lexicographic order, so (parent, token)
    // order is lexicographic order of the extended sequences.
    const std::size_t keep = std::min(opts.width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    candidates.resize(keep);
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return a.parent != b.parent ? a.parent < b.parent : a.token < b.token;
    });

    std::vector<Hypothesis> next;
    for (const auto& c : candidates) {
      Hypothesis h = active[c.parent];
      h.tokens.push_back(c.token);
      h.score = c.score;
      if (c.token == Vocabulary::kEos || h.tokens.size() >= opts.max_len) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);
  }

  std::sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    const double sa = ranking_score(a, opts.length_penalty);
    const double sb = ranking_score(b, opts.length_penalty);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });
  if (finished.size() > opts.width) finished.resize(opts.width);
  return finished;
}

model::EncoderOutput tile_memory(const model::EncoderOutput& memory, std::size_t copies) {
  return select_memory(memory, std::vector<std::size_t>(copies, 0));
}

model::EncoderOutput slice_memory(const model::EncoderOutput& memory, std::size_t index) {
  return select_memory(memory, {index});
}

ModelScorer::ModelScorer(const model::CaptionModel& model, model::EncoderOutput memory)
    : model_(model), memory_(std::move(memory)) {
  if (!memory_.x_high.defined() || memory_.x_high.dim(0) != 1) {
    throw DimensionError("ModelScorer expects the encoder output of a single clip");
  }
}

std::size_t ModelScorer::vocab_size() const { return model_.vocab_size(); }

std::vector<std::vector<double>> ModelScorer::next_scores(const std::vector<std::vector<TokenId>>& prefixes) {
  if (prefixes.size() != tiled_batch_) {
    tiled_ = tile_memory(memory_, prefixes.size());
    tiled_batch_ = prefixes.size();
  }
  return last_rows(model_, tiled_, prefixes);
}

model::EncoderOutput encode_clips(model::CaptionModel& model, const std::vector<const audio::MelSpectrogram*>& mels) {
  NoGradGuard no_grad;
  const auto batch = model::stack_mels(mels, model.config().encoder.fixed_frames);
  return model.encode(batch.mel, false, batch.frames);
}

std::vector<Hypothesis> greedy_decode_batch(const model::CaptionModel& model, const model::EncoderOutput& memory,
                                            std::size_t max_len) {
  const std::size_t clips = memory.x_high.dim(0);
  std::vector<Hypothesis> out(clips);
  std::vector<std::size_t> live(clips);
  for (std::size_t i = 0; i < clips; ++i) live[i] = i;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<std::vector<TokenId>> prefixes;
    for (std::size_t i : live) prefixes.push_back(with_sos(out[i].tokens));
    const auto rows = last_rows(model, select_memory(memory, live), prefixes);
    std::vector<std::size_t> still;
    for (std::size_t j = 0; j < live.size(); ++j) {
      Hypothesis& h = out[live[j]];
      const auto best = argmax(rows[j]);
      h.tokens.push_back(static_cast<TokenId>(best));
      h.score += rows[j][best];
      if (static_cast<TokenId>(best) != Vocabulary::kEos) still.push_back(live[j]);
    }
    live = std::move(still);
  }
  for (auto& h : out) h.finished = true;
  return out;
}

}  // namespace lhdff::infer
