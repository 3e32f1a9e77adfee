#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgst/normalizers.hpp"
#include "sgst/ops.hpp"
#include "sgst/scene_graph.hpp"
#include "sgst/tape.hpp"
#include "sgst/tensor.hpp"

namespace sgst {

enum class AlphaMode { Softmax, Fixed, Learned };

// Attention normalizer selection shared by every head of the model.
struct AlphaConfig {
  AlphaMode mode = AlphaMode::Fixed;
  double fixed_value = 1.5;

  // Accepts "softmax", "fixed:<v>" with v in (1, 2], or "learned".
  static AlphaConfig parse(const std::string& text);
  std::string to_string() const;
};

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 0;
  std::size_t max_vertices = 64;
  std::size_t max_len = 128;
  AlphaConfig alpha;
  // Scale scores by 1/sqrt(d_model) instead of 1/sqrt(head_dim).
  bool literal_sqrt_d = false;
  NeighborhoodOptions neighborhood;

  static ModelConfig desk();
  static ModelConfig paper();

  std::size_t head_dim() const { return d_model / heads; }
  double head_score_scale() const;
  double context_score_scale() const;
  void validate() const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct HeadParams {
  Tensor wq, wk, wv;
};

struct EncoderLayerParams {
  std::vector<HeadParams> heads;
  Tensor w_o;
  LayerNormParams ln_attn;  // LayerNorm(v_hat), shared by the FFN input and the residual
  LayerNormParams ln_out;
  FeedForwardParams ffn;
};

struct EncoderParams {
  Tensor vertex_embedding;  // |vocab| x d
  Tensor positional;        // max_vertices x d, indexed by canonical rank
  std::vector<EncoderLayerParams> layers;
};

struct ContextParams {
  Tensor wq, wk, wg;  // d x d each
};

struct DecoderLayerParams {
  std::vector<HeadParams> self_heads;
  Tensor self_w_o;
  LayerNormParams ln_self;
  ContextParams context;
  LayerNormParams ln_context;
  FeedForwardParams ffn;
  LayerNormParams ln_out;
};

struct DecoderParams {
  Tensor token_embedding;  // |vocab| x d
  std::vector<DecoderLayerParams> layers;
  Tensor w_out;  // d x |vocab|
  Tensor b_out;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct ConstNamedTensor {
  std::string name;
  const Tensor* tensor;
};

// All learned weights. In learned-alpha mode one att_scalar per (layer, head) is read by the
// encoder head, the decoder self-attention head and (head 0) the decoder context attention.
struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  DecoderParams decoder;
  std::vector<Tensor> att_scalars;

  // Projections ~ N(0, 1/d), embeddings and vertex positions ~ N(0, 1), LayerNorm 1/0, biases 0.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);

  std::vector<NamedTensor> named();
  std::vector<ConstNamedTensor> named() const;
  std::size_t parameter_count() const;

  Tensor& att_scalar(std::size_t layer, std::size_t head);
  const Tensor& att_scalar(std::size_t layer, std::size_t head) const;
  // Alpha a head uses right now: 1 for softmax, the fixed value, or 1 + sigmoid(att_scalar).
  double head_alpha(std::size_t layer, std::size_t head) const;
};

// Registers parameters on a tape on first use and remembers their node ids.
class ParamBinding {
 public:
  explicit ParamBinding(Tape& tape) : tape_(tape) {}

  NodeId operator()(const Tensor& param);
  std::optional<NodeId> find(const Tensor& param) const;
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  std::unordered_map<const Tensor*, NodeId> nodes_;
};

AttentionNormalizer head_normalizer(const ModelParams& params, ParamBinding& bind, std::size_t layer, std::size_t head);

// Fixed sinusoidal encodings for token positions [0, n).
Tensor sinusoidal_positions(std::size_t n, std::size_t d);

}  // namespace sgst
