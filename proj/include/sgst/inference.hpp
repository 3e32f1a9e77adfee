#pragma once

#include <span>
#include <vector>

#include "sgst/decoder.hpp"
#include "sgst/encoder.hpp"
#include "sgst/model.hpp"

namespace sgst {

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens without BOS or the closing EOS
  double log_prob = 0.0;    // cumulative log-probability, including the EOS step when finished
  bool finished = false;    // false when max_len ran out before EOS

  // Tokens counted by the length normalization: the body plus EOS when present.
  std::size_t scored_length() const { return tokens.size() + (finished ? 1 : 0); }
  double normalized_score() const;
  // BOS, body and EOS (when finished), ready for sequence_log_prob.
  std::vector<int> framed() const;
};

// log softmax of one logits row, the same arithmetic used by every decoding path.
std::vector<double> log_softmax_row(std::span<const double> logits);

// Argmax per step, lowest id on ties. `max_len` caps generated tokens, EOS included.
Hypothesis greedy_decode(const ModelParams& params, const GraphInput& graph, std::size_t max_len);

// Beam search over cumulative log-probs. Each step keeps the `width` best extensions
// (ties: earlier parent, then lower token id); EOS extensions are set aside as finished.
// The search stops once `width` hypotheses have finished or max_len is reached.
// The result is the finished hypothesis with the best log_prob / scored_length, or the best
// unfinished one when nothing finished. `all_finished` receives every finished hypothesis.
Hypothesis beam_search(const ModelParams& params, const GraphInput& graph, std::size_t width, std::size_t max_len,
                       std::vector<Hypothesis>* all_finished = nullptr);

}  // namespace sgst
