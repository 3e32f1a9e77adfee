#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgst/encoder.hpp"
#include "sgst/model.hpp"
#include "sgst/scene_graph.hpp"
#include "sgst/vocabulary.hpp"

namespace sgst {

// An example turned into ids: inputs = BOS y1..yn, targets = y1..yn EOS.
struct EncodedExample {
  GraphInput graph;
  std::vector<int> inputs;
  std::vector<int> targets;
};

EncodedExample encode_example(const Example& ex, const Vocabulary& vocab, const NeighborhoodOptions& options = {});
std::vector<EncodedExample> encode_examples(const std::vector<Example>& examples, const Vocabulary& vocab,
                                            const NeighborhoodOptions& options = {});

// Pads a graph to m vertices. Padding vertices carry PAD labels, rank 0, all-false mask
// rows and columns, and valid = 0, so they never enter any normalizer.
GraphInput pad_graph(const GraphInput& graph, std::size_t m);

struct Batch {
  std::vector<std::size_t> example_indices;
  std::vector<GraphInput> graphs;             // padded to the batch's largest graph
  std::vector<std::vector<int>> inputs;       // padded with PAD
  std::vector<std::vector<int>> targets;      // padded with PAD
  std::size_t target_tokens = 0;              // non-PAD targets in the batch

  std::size_t size() const { return example_indices.size(); }
};

// Seeded shuffle, then greedy packing so each batch's target tokens stay within `batch_tokens`.
// An example longer than the budget gets a batch of its own and a warning.
std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples, std::size_t batch_tokens,
                                std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

}  // namespace sgst
