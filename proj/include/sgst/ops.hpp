#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sgst/normalizers.hpp"
#include "sgst/tape.hpp"

namespace sgst {

inline constexpr double kLayerNormEps = 1e-5;

// Which keys each query row may attend to.
struct AttentionMask {
  enum class Kind { Full, Causal, Explicit };
  Kind kind = Kind::Full;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;  // rows x cols, Explicit only
  // Optional per-key validity applied on top of Full/Causal (padding).
  std::vector<std::uint8_t> key_valid;

  static AttentionMask full(std::size_t rows, std::size_t cols);
  static AttentionMask causal(std::size_t n);
  static AttentionMask explicit_mask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> allowed);

  bool allows(std::size_t i, std::size_t j) const;
};

// How one attention head turns scores into weights.
struct AttentionNormalizer {
  enum class Kind { Softmax, Entmax };
  Kind kind = Kind::Softmax;
  double fixed_alpha = 1.5;
  // Learned heads read alpha from a [1]-shaped att_scalar node.
  std::optional<NodeId> att_scalar;

  static AttentionNormalizer softmax() { return {Kind::Softmax, 0.0, std::nullopt}; }
  static AttentionNormalizer fixed(double alpha) { return {Kind::Entmax, alpha, std::nullopt}; }
  static AttentionNormalizer learned(NodeId att_scalar) { return {Kind::Entmax, 0.0, att_scalar}; }
};

// Observer for attention distributions produced during a forward pass.
struct AttentionStats {
  std::size_t zero_weights = 0;
  std::size_t total_weights = 0;
  bool record_support = false;
  std::vector<std::uint8_t> support_trace;

  void observe(const NormalizerOutput& out);
  double zero_fraction() const {
    return total_weights ? static_cast<double>(zero_weights) / static_cast<double>(total_weights) : 0.0;
  }
};

// Applies the configured normalizer to one row of scores.
NormalizerOutput normalize_scores(std::span<const double> z, AttentionNormalizer::Kind kind, double alpha);

namespace ops {

NodeId matmul(Tape& tape, NodeId a, NodeId b);
NodeId add(Tape& tape, NodeId a, NodeId b);
// x[m x n] + bias[n] broadcast over rows.
NodeId add_row(Tape& tape, NodeId x, NodeId bias);
NodeId scale(Tape& tape, NodeId x, double factor);
NodeId relu(Tape& tape, NodeId x);
// Row-wise LayerNorm over the last axis with population variance.
NodeId layer_norm(Tape& tape, NodeId x, NodeId gain, NodeId bias, double eps = kLayerNormEps);
// Rows of `table` selected by ids.
NodeId gather_rows(Tape& tape, NodeId table, std::vector<int> ids);
NodeId concat_cols(Tape& tape, const std::vector<NodeId>& parts);
NodeId sum(Tape& tape, NodeId x);
NodeId dot(Tape& tape, NodeId x, NodeId y);

// Masked attention: out_i = sum_j w_ij v_j where w_i. normalizes q_i . k_j * score_scale over
// the keys allowed for row i. Rows with no allowed key produce zeros.
NodeId attention(Tape& tape, NodeId q, NodeId k, NodeId v, const AttentionMask& mask,
                 const AttentionNormalizer& normalizer, double score_scale, AttentionStats* stats = nullptr);

// Mean over non-masked rows of -log softmax(logits)[target]. pad_mask[i] != 0 marks padding.
NodeId nll_loss(Tape& tape, NodeId logits, std::vector<int> targets, std::vector<std::uint8_t> pad_mask);

}  // namespace ops

// Effective alpha of a normalizer given the tape state.
double effective_alpha(const Tape& tape, const AttentionNormalizer& normalizer);

}  // namespace sgst
