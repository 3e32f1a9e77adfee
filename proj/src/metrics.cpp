#include "sgst/metrics.hpp"

#include <cmath>

#include "sgst/errors.hpp"

namespace sgst {

NGramCounts ngram_counts(const TokenList& tokens, std::size_t n) {
  NGramCounts out;
  if (n == 0 || tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

double bleu4(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references) {
  if (candidates.empty()) throw ContractError("bleu4: no candidates");
  if (candidates.size() != references.size()) throw ContractError("bleu4: one reference per candidate required");
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
  }
  if (cand_len == 0) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::size_t matched = 0;
    std::size_t total = 0;
    std::size_t ref_total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const NGramCounts cand = ngram_counts(candidates[i], n);
      const NGramCounts ref = ngram_counts(references[i], n);
      for (const auto& [gram, count] : cand) {
        total += count;
        const auto it = ref.find(gram);
        if (it != ref.end()) matched += std::min(count, it->second);
      }
      for (const auto& [gram, count] : ref) ref_total += count;
    }
    double p = 1.0;
    if (total == 0 && ref_total == 0) {
      p = 1.0;
    } else if (matched == 0) {
      p = kBleuEpsilon;
    } else {
      p = static_cast<double>(matched) / static_cast<double>(total);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand_len);
  const double r = static_cast<double>(ref_len);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

namespace {

using Vector = std::map<std::vector<std::string>, double>;

Vector tfidf(const NGramCounts& counts, const std::map<std::vector<std::string>, std::size_t>& df, double log_n) {
  Vector v;
  for (const auto& [gram, count] : counts) {
    const auto it = df.find(gram);
    const double d = it == df.end() ? 1.0 : static_cast<double>(std::max<std::size_t>(1, it->second));
    v[gram] = static_cast<double>(count) * (log_n - std::log(d));
  }
  return v;
}

double cosine(const Vector& a, const Vector& b) {
  double dot = 0.0;
  for (const auto& [gram, w] : a) {
    const auto it = b.find(gram);
    if (it != b.end()) dot += w * it->second;
  }
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [gram, w] : a) na += w * w;
  for (const auto& [gram, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double cider(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references) {
  if (candidates.empty()) throw ContractError("cider: no candidates");
  if (candidates.size() != references.size()) throw ContractError("cider: one reference set per candidate required");
  for (const auto& refs : references) {
    if (refs.empty()) throw ContractError("cider: every candidate needs at least one reference");
  }
  const double log_n = std::log(static_cast<double>(candidates.size()));
  double total = 0.0;
  std::vector<double> per_image(candidates.size(), 0.0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, std::size_t> df;
    for (const auto& refs : references) {
      NGramCounts seen;
      for (const auto& ref : refs) {
        for (const auto& [gram, count] : ngram_counts(ref, n)) seen[gram] = 1;
      }
      for (const auto& [gram, one] : seen) ++df[gram];
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const Vector cand = tfidf(ngram_counts(candidates[i], n), df, log_n);
      double sim = 0.0;
      for (const auto& ref : references[i]) sim += cosine(cand, tfidf(ngram_counts(ref, n), df, log_n));
      per_image[i] += sim / static_cast<double>(references[i].size());
    }
  }
  for (double s : per_image) total += 10.0 * s / 4.0;
  return total / static_cast<double>(candidates.size());
}

LengthStats length_stats(const std::vector<TokenList>& outputs) {
  LengthStats s;
  if (outputs.empty()) return s;
  const double n = static_cast<double>(outputs.size());
  for (const auto& o : outputs) s.mean += static_cast<double>(o.size());
  s.mean /= n;
  double var = 0.0;
  for (const auto& o : outputs) {
    const double d = static_cast<double>(o.size()) - s.mean;
    var += d * d;
  }
  s.stddev = std::sqrt(var / n);
  return s;
}

}  // namespace sgst
