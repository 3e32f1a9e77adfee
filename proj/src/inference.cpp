#include "sgst/inference.hpp"

#include <algorithm>
#include <cmath>

#include "sgst/errors.hpp"
#include "sgst/vocabulary.hpp"

namespace sgst {

double Hypothesis::normalized_score() const {
  const std::size_t n = scored_length();
  return n == 0 ? log_prob : log_prob / static_cast<double>(n);
}

std::vector<int> Hypothesis::framed() const {
  std::vector<int> out;
  out.reserve(tokens.size() + 2);
  out.push_back(Vocabulary::kBos);
  out.insert(out.end(), tokens.begin(), tokens.end());
  if (finished) out.push_back(Vocabulary::kEos);
  return out;
}

std::vector<double> log_softmax_row(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("log_softmax_row: empty logits");
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Hypothesis greedy_decode(const ModelParams& params, const GraphInput& graph, std::size_t max_len) {
  if (max_len == 0) throw ContractError("greedy_decode: max_len must be at least 1");
  DecodeState state = DecodeState::start(prepare_memory(params, graph), params);
  Hypothesis hyp;
  for (std::size_t step = 0; step < max_len; ++step) {
    const Tensor logits = decode_step(state, params);
    const std::vector<double> lp = log_softmax_row(logits.values());
    std::size_t best = 0;
    for (std::size_t k = 1; k < lp.size(); ++k) {
      if (lp[k] > lp[best]) best = k;
    }
    hyp.log_prob += lp[best];
    const int token = static_cast<int>(best);
    if (token == Vocabulary::kEos) {
      hyp.finished = true;
      break;
    }
    hyp.tokens.push_back(token);
    state.push(token);
  }
  return hyp;
}

namespace {

struct Live {
  Hypothesis hyp;
  DecodeState state;
};

struct Candidate {
  double score;
  double step_log_prob;
  std::size_t parent;
  int token;
};

}  // namespace

Hypothesis beam_search(const ModelParams& params, const GraphInput& graph, std::size_t width, std::size_t max_len,
                       std::vector<Hypothesis>* all_finished) {
  if (width == 0) throw ContractError("beam_search: width must be at least 1");
  if (max_len == 0) throw ContractError("beam_search: max_len must be at least 1");
  std::vector<Live> beam;
  beam.push_back({Hypothesis{}, DecodeState::start(prepare_memory(params, graph), params)});
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < max_len && !beam.empty() && finished.size() < width; ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const Tensor logits = decode_step(beam[b].state, params);
      const std::vector<double> lp = log_softmax_row(logits.values());
      for (std::size_t k = 0; k < lp.size(); ++k) {
        candidates.push_back({beam[b].hyp.log_prob + lp[k], lp[k], b, static_cast<int>(k)});
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        // Rounding can tie distinct step scores; keep greedy's preference.
                        if (a.step_log_prob != b.step_log_prob) return a.step_log_prob > b.step_log_prob;
                        return a.token < b.token;
                      });
    std::vector<Live> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      const Live& parent = beam[cand.parent];
      if (cand.token == Vocabulary::kEos) {
        Hypothesis done = parent.hyp;
        done.log_prob = cand.score;
        done.finished = true;
        finished.push_back(std::move(done));
        continue;
      }
      Live child{parent.hyp, parent.state};
      child.hyp.tokens.push_back(cand.token);
      child.hyp.log_prob = cand.score;
      child.state.push(cand.token);
      next.push_back(std::move(child));
    }
    beam = std::move(next);
  }

  if (all_finished) *all_finished = finished;
  const auto better = [](const Hypothesis& a, const Hypothesis& b) {
    return a.normalized_score() > b.normalized_score();
  };
  const std::vector<Hypothesis>* pool = &finished;
  std::vector<Hypothesis> unfinished;
  if (finished.empty()) {
    for (auto& live : beam) unfinished.push_back(std::move(live.hyp));
    pool = &unfinished;
  }
  if (pool->empty()) throw ContractError("beam_search produced no hypotheses");
  const Hypothesis* best = &pool->front();
  for (const auto& h : *pool) {
    if (better(h, *best)) best = &h;
  }
  return *best;
}

}  // namespace sgst
