#pragma once

#include <vector>

#include "lhdff/infer/search.hpp"

namespace lhdff::testing {

// Every complete hypothesis reachable within max_len steps: sequences that
// stop at their first <eos> or run to max_len. Sorted best first by
// ranking_score, ties by lower token sequence.
std::vector<infer::Hypothesis> enumerate_hypotheses(infer::StepScorer& scorer, std::size_t max_len,
                                                    double length_penalty);

// Deterministic pseudo-random log-probability rows keyed by prefix.
class TableScorer : public infer::StepScorer {
 public:
  TableScorer(std::size_t vocab, std::uint64_t seed, double eos_bias = 0.0);
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<std::vector<double>> next_scores(const std::vector<std::vector<infer::TokenId>>& prefixes) override;
  std::size_t calls() const { return calls_; }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  double eos_bias_;
  std::size_t calls_ = 0;
};

}  // namespace lhdff::testing
