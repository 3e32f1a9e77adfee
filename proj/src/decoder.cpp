#include "sgst/decoder.hpp"

#include <cmath>

#include "sgst/errors.hpp"

namespace sgst {

namespace {

void check_tokens(const ModelParams& params, std::span<const int> tokens) {
  if (tokens.empty()) throw ContractError("decoder needs at least one token");
  if (tokens.size() > params.config.max_len) {
    throw CapacityError("prefix of " + std::to_string(tokens.size()) + " tokens exceeds max_len " +
                        std::to_string(params.config.max_len));
  }
}

AttentionMask memory_mask(std::size_t rows, const std::vector<std::uint8_t>& memory_valid) {
  AttentionMask mask = AttentionMask::full(rows, memory_valid.size());
  for (auto v : memory_valid) {
    if (!v) {
      mask.key_valid = memory_valid;
      break;
    }
  }
  return mask;
}

}  // namespace

AttentionNormalizer value_normalizer(const ModelParams& params, std::size_t layer, std::size_t head) {
  if (params.config.alpha.mode == AlphaMode::Softmax) return AttentionNormalizer::softmax();
  return AttentionNormalizer::fixed(params.head_alpha(layer, head));
}

NodeId embed_tokens(ParamBinding& bind, const ModelParams& params, std::span<const int> tokens) {
  check_tokens(params, tokens);
  Tape& t = bind.tape();
  const NodeId emb =
      ops::gather_rows(t, bind(params.decoder.token_embedding), std::vector<int>(tokens.begin(), tokens.end()));
  const NodeId pos = t.constant(sinusoidal_positions(tokens.size(), params.config.d_model));
  return ops::add(t, emb, pos);
}

NodeId masked_self_attention(ParamBinding& bind, NodeId y, const HeadParams& head, const AttentionNormalizer& normalizer,
                             double score_scale, AttentionStats* stats) {
  Tape& t = bind.tape();
  const std::size_t n = t.value(y).rows();
  const NodeId q = ops::matmul(t, y, bind(head.wq));
  const NodeId k = ops::matmul(t, y, bind(head.wk));
  const NodeId v = ops::matmul(t, y, bind(head.wv));
  return ops::attention(t, q, k, v, AttentionMask::causal(n), normalizer, score_scale, stats);
}

NodeId context_attention(ParamBinding& bind, NodeId queries, NodeId memory, const std::vector<std::uint8_t>& memory_valid,
                         const ContextParams& params, const AttentionNormalizer& normalizer, double score_scale,
                         AttentionStats* stats) {
  Tape& t = bind.tape();
  const std::size_t rows = t.value(queries).rows();
  if (t.value(memory).rows() != memory_valid.size()) throw DimensionError("memory validity does not match memory rows");
  const NodeId q = ops::matmul(t, queries, bind(params.wq));
  const NodeId k = ops::matmul(t, memory, bind(params.wk));
  const NodeId g = ops::matmul(t, memory, bind(params.wg));
  return ops::attention(t, q, k, g, memory_mask(rows, memory_valid), normalizer, score_scale, stats);
}

NodeId decoder_block(ParamBinding& bind, const ModelParams& params, std::size_t layer_index, NodeId y, NodeId memory,
                     const std::vector<std::uint8_t>& memory_valid, AttentionStats* stats) {
  Tape& t = bind.tape();
  const DecoderLayerParams& layer = params.decoder.layers.at(layer_index);
  const ModelConfig& cfg = params.config;
  std::vector<NodeId> heads;
  for (std::size_t h = 0; h < layer.self_heads.size(); ++h) {
    heads.push_back(masked_self_attention(bind, y, layer.self_heads[h], head_normalizer(params, bind, layer_index, h),
                                          cfg.head_score_scale(), stats));
  }
  const NodeId joined = heads.size() == 1 ? heads[0] : ops::concat_cols(t, heads);
  const NodeId self_sum = ops::add(t, y, ops::matmul(t, joined, bind(layer.self_w_o)));
  const NodeId a = ops::layer_norm(t, self_sum, bind(layer.ln_self.gain), bind(layer.ln_self.bias));
  const NodeId ctx = context_attention(bind, a, memory, memory_valid, layer.context,
                                       head_normalizer(params, bind, layer_index, 0), cfg.context_score_scale(), stats);
  const NodeId b = ops::layer_norm(t, ops::add(t, a, ctx), bind(layer.ln_context.gain), bind(layer.ln_context.bias));
  const NodeId transformed = feed_forward(bind, b, layer.ffn);
  return ops::layer_norm(t, ops::add(t, transformed, b), bind(layer.ln_out.gain), bind(layer.ln_out.bias));
}

NodeId decode_logits(ParamBinding& bind, const ModelParams& params, NodeId memory,
                     const std::vector<std::uint8_t>& memory_valid, std::span<const int> tokens, AttentionStats* stats) {
  Tape& t = bind.tape();
  NodeId h = embed_tokens(bind, params, tokens);
  for (std::size_t l = 0; l < params.decoder.layers.size(); ++l) {
    h = decoder_block(bind, params, l, h, memory, memory_valid, stats);
  }
  return ops::add_row(t, ops::matmul(t, h, bind(params.decoder.w_out)), bind(params.decoder.b_out));
}

NodeId example_loss(ParamBinding& bind, const ModelParams& params, const GraphInput& graph, std::span<const int> inputs,
                    std::span<const int> targets, AttentionStats* stats) {
  if (inputs.size() != targets.size()) throw DimensionError("decoder inputs and targets differ in length");
  const NodeId memory = encode(bind, params, graph, stats);
  const NodeId logits = decode_logits(bind, params, memory, graph.valid, inputs, stats);
  std::vector<std::uint8_t> pad(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) pad[i] = targets[i] == Vocabulary::kPad ? 1 : 0;
  return ops::nll_loss(bind.tape(), logits, std::vector<int>(targets.begin(), targets.end()), std::move(pad));
}

Tensor full_prefix_logits(const ModelParams& params, const GraphInput& graph, std::span<const int> prefix,
                          AttentionStats* stats) {
  Tape tape(false);
  ParamBinding bind(tape);
  const NodeId memory = encode(bind, params, graph, stats);
  return tape.value(decode_logits(bind, params, memory, graph.valid, prefix, stats));
}

double sequence_log_prob(const ModelParams& params, const GraphInput& graph, std::span<const int> framed) {
  if (framed.size() < 2) throw ContractError("sequence_log_prob needs a framed sequence BOS ... EOS");
  if (framed.front() != Vocabulary::kBos) throw ContractError("sequence must start with BOS");
  const Tensor logits = full_prefix_logits(params, graph, framed.first(framed.size() - 1));
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < framed.size(); ++t) {
    const int target = framed[t + 1];
    if (target < 0 || static_cast<std::size_t>(target) >= logits.cols()) throw CapacityError("token id out of range");
    auto row = logits.row(t);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    total += row[static_cast<std::size_t>(target)] - (mx + std::log(z));
  }
  return total;
}

std::shared_ptr<const EncoderMemory> prepare_memory(const ModelParams& params, const GraphInput& graph) {
  auto mem = std::make_shared<EncoderMemory>();
  mem->states = encode_graph(params, graph);
  mem->valid = graph.valid;
  for (const auto& layer : params.decoder.layers) {
    mem->context_keys.push_back(kernels::matmul(mem->states, layer.context.wk));
    mem->context_values.push_back(kernels::matmul(mem->states, layer.context.wg));
  }
  mem->positions = sinusoidal_positions(params.config.max_len, params.config.d_model);
  return mem;
}

DecodeState DecodeState::start(std::shared_ptr<const EncoderMemory> memory, const ModelParams& params) {
  DecodeState s;
  s.memory = std::move(memory);
  s.prefix = {Vocabulary::kBos};
  s.layers.assign(params.config.layers, std::vector<HeadCache>(params.config.heads));
  return s;
}

namespace {

// Weighted sum of rows selected by `keys`, matching ops::attention's accumulation order.
void attend(std::span<const double> scores, const AttentionNormalizer& normalizer, double alpha,
            const double* values, std::size_t width, std::span<const std::size_t> keys, std::span<double> out,
            AttentionStats* stats) {
  const NormalizerOutput w = normalize_scores(scores, normalizer.kind, alpha);
  if (stats) stats->observe(w);
  kernels::weighted_row_sum(keys, w.probs, values, width, out);
}

void ffn_row(std::span<const double> x, const FeedForwardParams& ffn, std::span<double> out) {
  std::vector<double> hidden(ffn.w1.dim(1));
  kernels::row_times_matrix(x, ffn.w1, hidden);
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    hidden[i] += ffn.b1[i];
    hidden[i] = hidden[i] > 0.0 ? hidden[i] : 0.0;
  }
  kernels::row_times_matrix(hidden, ffn.w2, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += ffn.b2[i];
}

}  // namespace

Tensor decode_step(DecodeState& state, const ModelParams& params, AttentionStats* stats) {
  const ModelConfig& cfg = params.config;
  if (!state.memory) throw ContractError("decode state has no encoder memory");
  if (state.prefix.empty() || state.prefix.front() != Vocabulary::kBos) throw ContractError("prefix must start with BOS");
  if (state.prefix.size() > cfg.max_len) {
    throw CapacityError("prefix of " + std::to_string(state.prefix.size()) + " tokens exceeds max_len " +
                        std::to_string(cfg.max_len));
  }
  const EncoderMemory& mem = *state.memory;
  const std::size_t d = cfg.d_model, dh = cfg.head_dim(), heads = cfg.heads;
  std::vector<std::size_t> memory_keys;
  for (std::size_t j = 0; j < mem.valid.size(); ++j) {
    if (mem.valid[j]) memory_keys.push_back(j);
  }

  std::vector<double> x(d), tmp(d), a(d), b(d), joined(heads * dh), q(dh), k(dh), v(dh), head_out(dh);
  std::vector<double> ctx_q(d), ctx_out(d), scores;
  std::vector<std::size_t> keys;
  for (std::size_t pos = state.cached; pos < state.prefix.size(); ++pos) {
    const int token = state.prefix[pos];
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size) throw CapacityError("token id out of range");
    auto emb = params.decoder.token_embedding.row(static_cast<std::size_t>(token));
    auto pe = mem.positions.row(pos);
    for (std::size_t c = 0; c < d; ++c) x[c] = emb[c] + pe[c];

    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const DecoderLayerParams& layer = params.decoder.layers[l];
      keys.resize(pos + 1);
      for (std::size_t j = 0; j <= pos; ++j) keys[j] = j;
      for (std::size_t h = 0; h < heads; ++h) {
        const HeadParams& hp = layer.self_heads[h];
        DecodeState::HeadCache& cache = state.layers[l][h];
        kernels::row_times_matrix(x, hp.wq, q);
        kernels::row_times_matrix(x, hp.wk, k);
        kernels::row_times_matrix(x, hp.wv, v);
        cache.keys.insert(cache.keys.end(), k.begin(), k.end());
        cache.values.insert(cache.values.end(), v.begin(), v.end());
        scores.assign(pos + 1, 0.0);
        for (std::size_t j = 0; j <= pos; ++j) {
          const double* kj = cache.keys.data() + j * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += q[c] * kj[c];
          scores[j] = s * cfg.head_score_scale();
        }
        const AttentionNormalizer norm = value_normalizer(params, l, h);
        attend(scores, norm, norm.fixed_alpha, cache.values.data(), dh, keys, head_out, stats);
        std::copy(head_out.begin(), head_out.end(), joined.begin() + static_cast<std::ptrdiff_t>(h * dh));
      }
      kernels::row_times_matrix(joined, layer.self_w_o, tmp);
      for (std::size_t c = 0; c < d; ++c) tmp[c] = x[c] + tmp[c];
      kernels::layer_norm_row(tmp, layer.ln_self.gain.values(), layer.ln_self.bias.values(), kLayerNormEps, a);

      kernels::row_times_matrix(a, layer.context.wq, ctx_q);
      const Tensor& ck = mem.context_keys[l];
      scores.assign(memory_keys.size(), 0.0);
      for (std::size_t idx = 0; idx < memory_keys.size(); ++idx) {
        const double* kj = ck.data() + memory_keys[idx] * d;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += ctx_q[c] * kj[c];
        scores[idx] = s * cfg.context_score_scale();
      }
      const AttentionNormalizer ctx_norm = value_normalizer(params, l, 0);
      attend(scores, ctx_norm, ctx_norm.fixed_alpha, mem.context_values[l].data(), d, memory_keys, ctx_out, stats);
      for (std::size_t c = 0; c < d; ++c) tmp[c] = a[c] + ctx_out[c];
      kernels::layer_norm_row(tmp, layer.ln_context.gain.values(), layer.ln_context.bias.values(), kLayerNormEps, b);

      ffn_row(b, layer.ffn, tmp);
      for (std::size_t c = 0; c < d; ++c) tmp[c] = tmp[c] + b[c];
      kernels::layer_norm_row(tmp, layer.ln_out.gain.values(), layer.ln_out.bias.values(), kLayerNormEps, x);
    }
    state.cached = pos + 1;
    state.last_hidden = x;
  }
  Tensor logits({cfg.vocab_size});
  kernels::row_times_matrix(state.last_hidden, params.decoder.w_out, logits.values());
  for (std::size_t c = 0; c < cfg.vocab_size; ++c) logits[c] += params.decoder.b_out[c];
  return logits;
}

}  // namespace sgst
