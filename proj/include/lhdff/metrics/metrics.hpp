#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace lhdff::metrics {

using Tokens = std::vector<std::string>;

// One candidate caption with its references, already tokenized. An empty
// candidate scores zero; references must be non-empty.
struct EvalPair {
  Tokens candidate;
  std::vector<Tokens> references;
};

struct BleuDetail {
  std::array<double, 4> precisions{};  // modified n-gram precisions, unsmoothed
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;  // sum of closest reference lengths
  double score = 0.0;
};

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBeta = 1.2;

// Corpus BLEU-n with clipped counts, brevity penalty and zero precisions
// replaced by kBleuEpsilon.
BleuDetail bleu_detail(const std::vector<EvalPair>& pairs, int n);
double bleu(const std::vector<EvalPair>& pairs, int n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
double rouge_l_pair(const Tokens& candidate, const Tokens& reference, double beta = kRougeBeta);
// Mean over candidates of the best F-measure against any reference.
double rouge_l(const std::vector<EvalPair>& pairs);

// Plain CIDEr: tf-idf cosine per n = 1..4 with document frequencies over the
// reference sets, averaged over references, then over n, times 10.
double cider(const std::vector<EvalPair>& pairs);

struct Report {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
};

Report evaluate(const std::vector<EvalPair>& pairs);

}  // namespace lhdff::metrics
