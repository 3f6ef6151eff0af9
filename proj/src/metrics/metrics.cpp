#include "lhdff/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "lhdff/error.hpp"

namespace lhdff::metrics {

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[Tokens(words.begin() + static_cast<std::ptrdiff_t>(i), words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

void check_corpus(const std::vector<EvalPair>& pairs, const char* metric) {
  if (pairs.empty()) throw ContractError(std::string(metric) + ": empty corpus");
  for (const auto& p : pairs) {
    if (p.references.empty()) throw ContractError(std::string(metric) + ": candidate without references");
    for (const auto& r : p.references) {
      if (r.empty()) throw ContractError(std::string(metric) + ": empty reference caption");
    }
  }
}

}  // namespace

BleuDetail bleu_detail(const std::vector<EvalPair>& pairs, int n) {
  check_corpus(pairs, "BLEU");
  if (n < 1 || n > 4) throw ConfigError("BLEU order must be 1..4, got " + std::to_string(n));

  BleuDetail out;
  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> total{};
  for (const auto& p : pairs) {
    out.candidate_length += p.candidate.size();
    // closest reference length, shorter wins ties
    std::size_t best = p.references.front().size();
    for (const auto& r : p.references) {
      const auto diff = [&](std::size_t len) {
        return len > p.candidate.size() ? len - p.candidate.size() : p.candidate.size() - len;
      };
      if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
    }
    out.reference_length += best;

    for (int k = 1; k <= n; ++k) {
      const auto cand = ngrams(p.candidate, static_cast<std::size_t>(k));
      NgramCounts max_ref;
      for (const auto& r : p.references) {
        for (const auto& [g, c] : ngrams(r, static_cast<std::size_t>(k))) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : cand) {
        total[static_cast<std::size_t>(k - 1)] += c;
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[static_cast<std::size_t>(k - 1)] += std::min(c, it->second);
      }
    }
  }

  if (out.candidate_length == 0) return out;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    out.precisions[i] = total[i] == 0 ? 0.0 : static_cast<double>(matched[i]) / static_cast<double>(total[i]);
    log_sum += std::log(std::max(out.precisions[i], kBleuEpsilon));
  }
  const double c = static_cast<double>(out.candidate_length);
  const double r = static_cast<double>(out.reference_length);
  out.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);
  out.score = out.brevity_penalty * std::exp(log_sum / n);
  return out;
}

double bleu(const std::vector<EvalPair>& pairs, int n) { return bleu_detail(pairs, n).score; }

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const Tokens& candidate, const Tokens& reference, double beta) {
  const auto lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(const std::vector<EvalPair>& pairs) {
  check_corpus(pairs, "ROUGE-L");
  double sum = 0.0;
  for (const auto& p : pairs) {
    double best = 0.0;
    for (const auto& r : p.references) best = std::max(best, rouge_l_pair(p.candidate, r));
    sum += best;
  }
  return sum / static_cast<double>(pairs.size());
}

double cider(const std::vector<EvalPair>& pairs) {
  check_corpus(pairs, "CIDEr");
  const double docs = static_cast<double>(pairs.size());
  double total = 0.0;
  std::vector<double> per_clip(pairs.size(), 0.0);

  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Tokens, std::size_t> df;
    for (const auto& p : pairs) {
      std::set<Tokens> seen;
      for (const auto& r : p.references) {
        for (const auto& entry : ngrams(r, n)) seen.insert(entry.first);
      }
      for (const auto& g : seen) ++df[g];
    }
    const auto weigh = [&](const NgramCounts& counts) {
      std::map<Tokens, double> vec;
      std::size_t len = 0;
      for (const auto& entry : counts) len += entry.second;
      for (const auto& [g, c] : counts) {
        const auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : static_cast<double>(it->second);
        vec[g] = static_cast<double>(c) / static_cast<double>(len) * std::log(docs / d);
      }
      return vec;
    };
    const auto norm = [](const std::map<Tokens, double>& v) {
      double s = 0.0;
      for (const auto& entry : v) s += entry.second * entry.second;
      return std::sqrt(s);
    };

    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto cand = weigh(ngrams(pairs[i].candidate, n));
      const double cn = norm(cand);
      double sim = 0.0;
      for (const auto& r : pairs[i].references) {
        const auto ref = weigh(ngrams(r, n));
        const double rn = norm(ref);
        if (cn == 0.0 || rn == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, w] : cand) {
          const auto it = ref.find(g);
          if (it != ref.end()) dot += w * it->second;
        }
        sim += dot / (cn * rn);
      }
      per_clip[i] += sim / static_cast<double>(pairs[i].references.size());
    }
  }
  for (double v : per_clip) total += v / 4.0 * 10.0;
  return total / docs;
}

Report evaluate(const std::vector<EvalPair>& pairs) {
  Report r;
  r.bleu1 = bleu(pairs, 1);
  r.bleu2 = bleu(pairs, 2);
  r.bleu3 = bleu(pairs, 3);
  r.bleu4 = bleu(pairs, 4);
  r.rouge_l = rouge_l(pairs);
  r.cider = cider(pairs);
  return r;
}

}  // namespace lhdff::metrics
