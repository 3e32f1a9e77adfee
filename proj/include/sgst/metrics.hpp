#pragma once

#include <map>
#include <string>
#include <vector>

namespace sgst {

using TokenList = std::vector<std::string>;
using NGramCounts = std::map<std::vector<std::string>, std::size_t>;

inline constexpr double kBleuEpsilon = 1e-9;

NGramCounts ngram_counts(const TokenList& tokens, std::size_t n);

// Corpus BLEU-4 with one reference per candidate. A zero clipped precision becomes 1e-9;
// an order where candidates and references both have no n-grams counts as precision 1.
double bleu4(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references);

// Plain CIDEr: document frequencies over the reference sets, tf * log(N / max(1, df)) vectors,
// cosine similarity averaged over references and n = 1..4, times 10, averaged over images.
double cider(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references);

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

LengthStats length_stats(const std::vector<TokenList>& outputs);

}  // namespace sgst
