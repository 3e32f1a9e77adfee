#include "sgst/batching.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "sgst/errors.hpp"

namespace sgst {

EncodedExample encode_example(const Example& ex, const Vocabulary& vocab, const NeighborhoodOptions& options) {
  EncodedExample out;
  out.graph = graph_input_from_raw(ex.graph, vocab, options);
  const std::vector<int> body = vocab.encode(ex.paragraph);
  out.inputs.push_back(Vocabulary::kBos);
  out.inputs.insert(out.inputs.end(), body.begin(), body.end());
  out.targets = body;
  out.targets.push_back(Vocabulary::kEos);
  return out;
}

std::vector<EncodedExample> encode_examples(const std::vector<Example>& examples, const Vocabulary& vocab,
                                            const NeighborhoodOptions& options) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_example(ex, vocab, options));
  return out;
}

GraphInput pad_graph(const GraphInput& graph, std::size_t m) {
  const std::size_t n = graph.size();
  if (m < n) throw ContractError("cannot pad a graph to fewer vertices");
  GraphInput out;
  out.labels = graph.labels;
  out.ranks = graph.ranks;
  out.valid = graph.valid;
  out.labels.resize(m, Vocabulary::kPad);
  out.ranks.resize(m, 0);
  out.valid.resize(m, 0);
  out.mask = BoolMatrix(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.mask.set(i, j, graph.mask.get(i, j));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples, std::size_t batch_tokens,
                                std::uint64_t seed, std::vector<std::string>* warnings) {
  if (examples.empty()) throw ContractError("make_batches: dataset is empty");
  if (batch_tokens == 0) throw ContractError("make_batches: batch token budget must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  std::vector<std::vector<std::size_t>> groups;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    const std::size_t len = examples[idx].targets.size();
    if (len > batch_tokens) {
      if (warnings) {
        warnings->push_back("example " + std::to_string(idx) + " has " + std::to_string(len) +
                            " target tokens, more than the batch budget of " + std::to_string(batch_tokens));
      }
      groups.push_back({idx});
      used = batch_tokens;  // close it
      continue;
    }
    if (groups.empty() || used + len > batch_tokens) {
      groups.emplace_back();
      used = 0;
    }
    groups.back().push_back(idx);
    used += len;
  }

  std::vector<Batch> batches;
  for (const auto& group : groups) {
    Batch b;
    b.example_indices = group;
    std::size_t max_m = 0, max_n = 0;
    for (std::size_t idx : group) {
      max_m = std::max(max_m, examples[idx].graph.size());
      max_n = std::max(max_n, examples[idx].targets.size());
    }
    for (std::size_t idx : group) {
      const EncodedExample& ex = examples[idx];
      b.graphs.push_back(pad_graph(ex.graph, max_m));
      std::vector<int> in = ex.inputs, tg = ex.targets;
      in.resize(max_n, Vocabulary::kPad);
      tg.resize(max_n, Vocabulary::kPad);
      b.inputs.push_back(std::move(in));
      b.targets.push_back(std::move(tg));
      b.target_tokens += ex.targets.size();
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace sgst
