#include "sgst/encoder.hpp"

#include "sgst/errors.hpp"

namespace sgst {

AttentionMask GraphInput::attention_mask() const {
  return AttentionMask::explicit_mask(mask.size(), mask.size(), mask.bits());
}

GraphInput make_graph_input(const SceneGraph& g, const Vocabulary& vocab, const NeighborhoodOptions& options) {
  GraphInput in;
  in.mask = neighborhood_mask(g, options);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vertex& v = g.vertex(i);
    in.labels.push_back(v.kind == VertexKind::Global ? vocab.id(kGlobalLabel) : vocab.id(normalize_label(v.label)));
    in.ranks.push_back(static_cast<int>(i));
    in.valid.push_back(1);
  }
  return in;
}

GraphInput graph_input_from_raw(const RawSceneGraph& raw, const Vocabulary& vocab, const NeighborhoodOptions& options) {
  return make_graph_input(add_global_vertex(rewrite_relations(raw)), vocab, options);
}

NodeId embed_vertices(ParamBinding& bind, const EncoderParams& params, const GraphInput& graph) {
  const std::size_t max_m = params.positional.rows();
  for (int r : graph.ranks) {
    if (r < 0 || static_cast<std::size_t>(r) >= max_m) {
      throw CapacityError("graph has " + std::to_string(graph.size()) + " vertices; positional table holds " +
                          std::to_string(max_m));
    }
  }
  const NodeId emb = ops::gather_rows(bind.tape(), bind(params.vertex_embedding), graph.labels);
  const NodeId pos = ops::gather_rows(bind.tape(), bind(params.positional), graph.ranks);
  return ops::add(bind.tape(), emb, pos);
}

NodeId graph_attention_head(ParamBinding& bind, NodeId vertices, const AttentionMask& mask, const HeadParams& head,
                            const AttentionNormalizer& normalizer, double score_scale, AttentionStats* stats) {
  Tape& t = bind.tape();
  const NodeId q = ops::matmul(t, vertices, bind(head.wq));
  const NodeId k = ops::matmul(t, vertices, bind(head.wk));
  const NodeId v = ops::matmul(t, vertices, bind(head.wv));
  return ops::attention(t, q, k, v, mask, normalizer, score_scale, stats);
}

NodeId multi_head_graph_attention(ParamBinding& bind, NodeId vertices, const AttentionMask& mask,
                                  const EncoderLayerParams& layer, const std::vector<AttentionNormalizer>& normalizers,
                                  double score_scale, AttentionStats* stats) {
  if (normalizers.size() != layer.heads.size()) throw ContractError("one normalizer per head required");
  std::vector<NodeId> outs;
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    outs.push_back(graph_attention_head(bind, vertices, mask, layer.heads[h], normalizers[h], score_scale, stats));
  }
  Tape& t = bind.tape();
  const NodeId joined = outs.size() == 1 ? outs[0] : ops::concat_cols(t, outs);
  return ops::add(t, vertices, ops::matmul(t, joined, bind(layer.w_o)));
}

NodeId feed_forward(ParamBinding& bind, NodeId x, const FeedForwardParams& ffn) {
  Tape& t = bind.tape();
  const NodeId hidden = ops::relu(t, ops::add_row(t, ops::matmul(t, x, bind(ffn.w1)), bind(ffn.b1)));
  return ops::add_row(t, ops::matmul(t, hidden, bind(ffn.w2)), bind(ffn.b2));
}

NodeId encoder_block(ParamBinding& bind, NodeId v_hat, const EncoderLayerParams& layer) {
  Tape& t = bind.tape();
  const NodeId normed = ops::layer_norm(t, v_hat, bind(layer.ln_attn.gain), bind(layer.ln_attn.bias));
  const NodeId transformed = feed_forward(bind, normed, layer.ffn);
  return ops::layer_norm(t, ops::add(t, transformed, normed), bind(layer.ln_out.gain), bind(layer.ln_out.bias));
}

NodeId encode(ParamBinding& bind, const ModelParams& params, const GraphInput& graph, AttentionStats* stats) {
  const AttentionMask mask = graph.attention_mask();
  NodeId h = embed_vertices(bind, params.encoder, graph);
  for (std::size_t l = 0; l < params.encoder.layers.size(); ++l) {
    std::vector<AttentionNormalizer> normalizers;
    for (std::size_t head = 0; head < params.config.heads; ++head) {
      normalizers.push_back(head_normalizer(params, bind, l, head));
    }
    const NodeId v_hat = multi_head_graph_attention(bind, h, mask, params.encoder.layers[l], normalizers,
                                                    params.config.head_score_scale(), stats);
    h = encoder_block(bind, v_hat, params.encoder.layers[l]);
  }
  return h;
}

Tensor encode_graph(const ModelParams& params, const GraphInput& graph, AttentionStats* stats) {
  Tape tape(false);
  ParamBinding bind(tape);
  return tape.value(encode(bind, params, graph, stats));
}

}  // namespace sgst
