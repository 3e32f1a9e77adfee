#pragma once

#include <cstdint>
#include <vector>

#include "sgst/model.hpp"
#include "sgst/ops.hpp"
#include "sgst/scene_graph.hpp"
#include "sgst/vocabulary.hpp"

namespace sgst {

// Encoder-ready view of a finalized scene graph.
struct GraphInput {
  std::vector<int> labels;           // vocabulary ids, one per vertex
  std::vector<int> ranks;            // positional row per vertex
  BoolMatrix mask;                   // neighborhood mask; padding rows are all false
  std::vector<std::uint8_t> valid;   // 0 marks a padding vertex

  std::size_t size() const { return labels.size(); }
  AttentionMask attention_mask() const;
};

// `g` must already carry its global vertex. Unknown labels map to UNK; rank = vertex index.
GraphInput make_graph_input(const SceneGraph& g, const Vocabulary& vocab, const NeighborhoodOptions& options = {});
// rewrite_relations + add_global_vertex + make_graph_input.
GraphInput graph_input_from_raw(const RawSceneGraph& raw, const Vocabulary& vocab,
                                const NeighborhoodOptions& options = {});

// V0 = embedding[label] + positional[rank].
NodeId embed_vertices(ParamBinding& bind, const EncoderParams& params, const GraphInput& graph);

// One head of neighborhood-restricted attention; returns m x head_dim.
NodeId graph_attention_head(ParamBinding& bind, NodeId vertices, const AttentionMask& mask, const HeadParams& head,
                            const AttentionNormalizer& normalizer, double score_scale, AttentionStats* stats = nullptr);

// v_hat = V + concat(heads) * W_O.
NodeId multi_head_graph_attention(ParamBinding& bind, NodeId vertices, const AttentionMask& mask,
                                  const EncoderLayerParams& layer, const std::vector<AttentionNormalizer>& normalizers,
                                  double score_scale, AttentionStats* stats = nullptr);

// h = LayerNorm_out(FFN(LayerNorm_attn(v_hat)) + LayerNorm_attn(v_hat)).
NodeId encoder_block(ParamBinding& bind, NodeId v_hat, const EncoderLayerParams& layer);

NodeId feed_forward(ParamBinding& bind, NodeId x, const FeedForwardParams& ffn);

// Full stack: embeddings followed by config.layers blocks.
NodeId encode(ParamBinding& bind, const ModelParams& params, const GraphInput& graph, AttentionStats* stats = nullptr);

// Tape-free convenience wrapper returning H_enc.
Tensor encode_graph(const ModelParams& params, const GraphInput& graph, AttentionStats* stats = nullptr);

}  // namespace sgst
