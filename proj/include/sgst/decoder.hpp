#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sgst/encoder.hpp"
#include "sgst/model.hpp"
#include "sgst/ops.hpp"

namespace sgst {

// token_embedding[id] + sinusoid[position].
NodeId embed_tokens(ParamBinding& bind, const ModelParams& params, std::span<const int> tokens);

// Causal attention of one head over the prefix; returns t x head_dim.
NodeId masked_self_attention(ParamBinding& bind, NodeId y, const HeadParams& head, const AttentionNormalizer& normalizer,
                             double score_scale, AttentionStats* stats = nullptr);

// Single-head context attention of every decoder row over all valid encoder rows:
// out_t = sum_j gamma_tj W_G h_j with gamma_t. = Normalize over scores (h_t Wq).(h_j Wk).
NodeId context_attention(ParamBinding& bind, NodeId queries, NodeId memory, const std::vector<std::uint8_t>& memory_valid,
                         const ContextParams& params, const AttentionNormalizer& normalizer, double score_scale,
                         AttentionStats* stats = nullptr);

// a = LN_self(y + selfattn(y)); b = LN_ctx(a + ctx(a)); out = LN_out(b + FFN(b)).
NodeId decoder_block(ParamBinding& bind, const ModelParams& params, std::size_t layer, NodeId y, NodeId memory,
                     const std::vector<std::uint8_t>& memory_valid, AttentionStats* stats = nullptr);

// Teacher-forced logits for every prefix position: t x |vocab|.
NodeId decode_logits(ParamBinding& bind, const ModelParams& params, NodeId memory,
                     const std::vector<std::uint8_t>& memory_valid, std::span<const int> tokens,
                     AttentionStats* stats = nullptr);

// Mean next-token NLL of one example on the tape. `targets` may contain PAD entries.
NodeId example_loss(ParamBinding& bind, const ModelParams& params, const GraphInput& graph, std::span<const int> inputs,
                    std::span<const int> targets, AttentionStats* stats = nullptr);

// Uncached logits of the whole prefix, recomputed from scratch.
Tensor full_prefix_logits(const ModelParams& params, const GraphInput& graph, std::span<const int> prefix,
                          AttentionStats* stats = nullptr);

// sum_t log softmax(logits_t)[y_t] over every token after BOS; the softmax spans the whole vocabulary.
double sequence_log_prob(const ModelParams& params, const GraphInput& graph, std::span<const int> framed);

// Encoder output plus per-layer context keys/values, shared read-only by every decode state.
struct EncoderMemory {
  Tensor states;
  std::vector<std::uint8_t> valid;
  std::vector<Tensor> context_keys;    // per layer, m x d
  std::vector<Tensor> context_values;  // per layer, W_G-projected rows, m x d
  Tensor positions;                    // max_len x d sinusoids
};

std::shared_ptr<const EncoderMemory> prepare_memory(const ModelParams& params, const GraphInput& graph);

// Incremental decoding state: prefix plus cached self-attention keys/values per layer and head.
struct DecodeState {
  struct HeadCache {
    std::vector<double> keys;
    std::vector<double> values;
  };

  std::shared_ptr<const EncoderMemory> memory;
  std::vector<int> prefix;
  std::size_t cached = 0;
  std::vector<std::vector<HeadCache>> layers;
  std::vector<double> last_hidden;  // top-layer output at position cached - 1

  // State holding only BOS.
  static DecodeState start(std::shared_ptr<const EncoderMemory> memory, const ModelParams& params);
  void push(int token) { prefix.push_back(token); }
};

// Processes every prefix position not yet cached and returns the next-token logits.
Tensor decode_step(DecodeState& state, const ModelParams& params, AttentionStats* stats = nullptr);

// Normalizer for inference paths where alpha is read directly from the parameters.
AttentionNormalizer value_normalizer(const ModelParams& params, std::size_t layer, std::size_t head);

}  // namespace sgst
