#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sgst/decoder.hpp"
#include "sgst/encoder.hpp"
#include "sgst/errors.hpp"
#include "support.hpp"

using namespace sgst;
using check::generic_params;
using check::random_tensor;
using check::tiny_config;

namespace {

GraphInput input_with_mask(const BoolMatrix& mask, std::mt19937_64& rng, std::size_t vocab) {
  GraphInput g;
  g.mask = mask;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    g.labels.push_back(static_cast<int>(rng() % vocab));
    g.ranks.push_back(static_cast<int>(i));
    g.valid.push_back(1);
  }
  return g;
}

BoolMatrix full_mask(std::size_t m) {
  BoolMatrix b(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) b.set(i, j);
  }
  return b;
}

// Path 0-1-2-...-(m-1) with self loops, symmetric.
BoolMatrix path_mask(std::size_t m) {
  BoolMatrix b(m);
  for (std::size_t i = 0; i < m; ++i) {
    b.set(i, i);
    if (i + 1 < m) {
      b.set(i, i + 1);
      b.set(i + 1, i);
    }
  }
  return b;
}

Tensor run(const std::function<NodeId(ParamBinding&)>& f) {
  Tape tape(false);
  ParamBinding bind(tape);
  return tape.value(f(bind));
}

// Dense oracle: scores over all keys with disallowed ones at -inf, softmax or bisection entmax.
Tensor dense_attention_oracle(const Tensor& v, const HeadParams& head, const BoolMatrix& mask, double scale,
                              double alpha) {
  const Tensor q = kernels::matmul(v, head.wq), k = kernels::matmul(v, head.wk), val = kernels::matmul(v, head.wv);
  const std::size_t m = v.rows(), dh = q.cols();
  Tensor out({m, dh});
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> z(m);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += q.at(i, c) * k.at(j, c);
      z[j] = mask.get(i, j) ? s * scale : -std::numeric_limits<double>::infinity();
      mx = std::max(mx, z[j]);
    }
    std::vector<double> p(m, 0.0);
    if (alpha == 1.0) {
      double tot = 0.0;
      for (std::size_t j = 0; j < m; ++j) tot += p[j] = std::exp(z[j] - mx);
      for (double& x : p) x /= tot;
    } else {
      // Bisection on tau over the finite scores; -inf entries contribute nothing.
      double lo = (alpha - 1.0) * mx - 1.0, hi = (alpha - 1.0) * mx;
      const auto mass = [&](double tau) {
        double s = 0.0;
        for (double x : z) {
          if (std::isfinite(x)) s += std::pow(std::max(0.0, (alpha - 1.0) * x - tau), 1.0 / (alpha - 1.0));
        }
        return s;
      };
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mass(mid) > 1.0 ? lo : hi) = mid;
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (std::isfinite(z[j])) p[j] = std::pow(std::max(0.0, (alpha - 1.0) * z[j] - lo), 1.0 / (alpha - 1.0));
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < dh; ++c) out.at(i, c) += p[j] * val.at(j, c);
    }
  }
  return out;
}

Tensor layer_norm_oracle(const Tensor& x, const LayerNormParams& ln) {
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    kernels::layer_norm_row(x.row(r), ln.gain.values(), ln.bias.values(), kLayerNormEps, out.row(r));
  }
  return out;
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(EmbedTest, ZeroTablesGiveZeroRow) {
  ModelParams p = ModelParams::zeros(tiny_config(6));
  GraphInput g;
  g.labels = {5};
  g.ranks = {0};
  g.valid = {1};
  g.mask = full_mask(1);
  const Tensor v = run([&](ParamBinding& b) { return embed_vertices(b, p.encoder, g); });
  EXPECT_EQ(v.max_abs(), 0.0);
}

TEST(EmbedTest, SameLabelDiffersByPosition) {
  const ModelParams p = ModelParams::init(tiny_config(6), 3);
  GraphInput g;
  g.labels = {4, 4};
  g.ranks = {0, 3};
  g.valid = {1, 1};
  g.mask = full_mask(2);
  const Tensor v = run([&](ParamBinding& b) { return embed_vertices(b, p.encoder, g); });
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_DOUBLE_EQ(v.at(1, c) - v.at(0, c), p.encoder.positional.at(3, c) - p.encoder.positional.at(0, c));
  }
}

TEST(EmbedTest, TooManyVerticesIsCapacityError) {
  ModelConfig c = tiny_config(6);
  c.max_vertices = 3;
  const ModelParams p = ModelParams::init(c, 1);
  std::mt19937_64 rng(1);
  const GraphInput g = input_with_mask(full_mask(4), rng, 6);
  EXPECT_THROW(run([&](ParamBinding& b) { return embed_vertices(b, p.encoder, g); }), CapacityError);
}

TEST(EmbedTest, CanonicalRanksFollowInputOrder) {
  RawSceneGraph raw;
  raw.objects = {{"a", "man", {"tall"}}, {"b", "racket", {}}, {"c", "dog", {"small"}}};
  raw.relations = {{"a", "holding", "b"}};
  Vocabulary vocab;
  for (const char* t : {"<global>", "man", "racket", "dog", "tall", "small", "holding"}) vocab.add(t);
  const GraphInput g = graph_input_from_raw(raw, vocab);
  const std::vector<std::string> golden{"man", "racket", "dog", "holding", "tall", "small", "<global>"};
  ASSERT_EQ(g.size(), golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) {
    EXPECT_EQ(vocab.token(g.labels[i]), golden[i]);
    EXPECT_EQ(g.ranks[i], static_cast<int>(i));
  }
  std::swap(raw.objects[0], raw.objects[2]);
  const GraphInput h = graph_input_from_raw(raw, vocab);
  const std::vector<std::string> swapped{"dog", "racket", "man", "holding", "small", "tall", "<global>"};
  for (std::size_t i = 0; i < swapped.size(); ++i) EXPECT_EQ(vocab.token(h.labels[i]), swapped[i]);
}

TEST(GraphHeadTest, SelfOnlyNeighborhoodCopiesValue) {
  std::mt19937_64 rng(2);
  const Tensor v = random_tensor({3, 4}, rng);
  const HeadParams head{random_tensor({4, 2}, rng), random_tensor({4, 2}, rng), random_tensor({4, 2}, rng)};
  BoolMatrix self(3);
  for (std::size_t i = 0; i < 3; ++i) self.set(i, i);
  const AttentionMask mask = AttentionMask::explicit_mask(3, 3, self.bits());
  const Tensor out = run([&](ParamBinding& b) {
    return graph_attention_head(b, b.tape().constant(v), mask, head, AttentionNormalizer::fixed(1.5), 0.7);
  });
  EXPECT_TRUE(out.bitwise_equal(kernels::matmul(v, head.wv)));
}

TEST(GraphHeadTest, IdenticalKeysGiveUniformWeights) {
  std::mt19937_64 rng(3);
  const Tensor q = random_tensor({3, 2}, rng), vals = random_tensor({3, 2}, rng);
  Tensor k({3, 2});
  for (std::size_t j = 0; j < 3; ++j) {
    k.at(j, 0) = 0.4;
    k.at(j, 1) = -1.1;
  }
  const BoolMatrix mask = path_mask(3);
  for (auto norm : {AttentionNormalizer::softmax(), AttentionNormalizer::fixed(1.5), AttentionNormalizer::fixed(2.0)}) {
    Tape t(false);
    const Tensor& out = t.value(ops::attention(t, t.constant(q), t.constant(k), t.constant(vals),
                                               AttentionMask::explicit_mask(3, 3, mask.bits()), norm, 1.0));
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_NEAR(out.at(0, c), (vals.at(0, c) + vals.at(1, c)) / 2.0, 1e-12);
      EXPECT_NEAR(out.at(1, c), (vals.at(0, c) + vals.at(1, c) + vals.at(2, c)) / 3.0, 1e-12);
    }
  }
}

TEST(GraphHeadTest, ChainMatchesDenseMaskedOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor v = random_tensor({4, 4}, rng);
    const HeadParams head{random_tensor({4, 2}, rng), random_tensor({4, 2}, rng), random_tensor({4, 2}, rng)};
    const BoolMatrix m = path_mask(4);
    const AttentionMask mask = AttentionMask::explicit_mask(4, 4, m.bits());
    for (double alpha : {1.0, 1.3, 1.5, 2.0}) {
      const AttentionNormalizer norm = alpha == 1.0 ? AttentionNormalizer::softmax() : AttentionNormalizer::fixed(alpha);
      const Tensor out = run([&](ParamBinding& b) {
        return graph_attention_head(b, b.tape().constant(v), mask, head, norm, 0.9);
      });
      expect_near(out, dense_attention_oracle(v, head, m, 0.9, alpha), alpha == 1.0 ? 1e-12 : 1e-8);
    }
  }
}

TEST(MultiHeadTest, ZeroOutputProjectionIsResidual) {
  ModelParams p = generic_params(tiny_config(6), 5);
  p.encoder.layers[0].w_o.fill(0.0);
  std::mt19937_64 rng(5);
  const Tensor v = random_tensor({5, 4}, rng);
  const GraphInput g = input_with_mask(path_mask(5), rng, 6);
  const Tensor out = run([&](ParamBinding& b) {
    return multi_head_graph_attention(b, b.tape().constant(v), g.attention_mask(), p.encoder.layers[0],
                                      {AttentionNormalizer::fixed(1.5), AttentionNormalizer::fixed(1.5)}, 0.5);
  });
  EXPECT_TRUE(out.bitwise_equal(v));
}

TEST(MultiHeadTest, SingleFullWidthHeadWithIdentity) {
  std::mt19937_64 rng(6);
  EncoderLayerParams layer;
  layer.heads = {{random_tensor({4, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4, 4}, rng)}};
  layer.w_o = Tensor::identity(4);
  const Tensor v = random_tensor({3, 4}, rng);
  const BoolMatrix m = full_mask(3);
  const AttentionMask mask = AttentionMask::explicit_mask(3, 3, m.bits());
  const Tensor out = run([&](ParamBinding& b) {
    return multi_head_graph_attention(b, b.tape().constant(v), mask, layer, {AttentionNormalizer::softmax()}, 0.5);
  });
  const Tensor head = dense_attention_oracle(v, layer.heads[0], m, 0.5, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], v[i] + head[i], 1e-12);
}

TEST(MultiHeadTest, TwoHeadsMatchManualConcatProject) {
  const ModelParams p = generic_params(tiny_config(6), 7);
  std::mt19937_64 rng(7);
  const Tensor v = random_tensor({5, 4}, rng);
  const BoolMatrix m = path_mask(5);
  const AttentionMask mask = AttentionMask::explicit_mask(5, 5, m.bits());
  const auto& layer = p.encoder.layers[0];
  const Tensor out = run([&](ParamBinding& b) {
    return multi_head_graph_attention(b, b.tape().constant(v), mask, layer,
                                      {AttentionNormalizer::softmax(), AttentionNormalizer::softmax()}, 0.5);
  });
  const Tensor h0 = dense_attention_oracle(v, layer.heads[0], m, 0.5, 1.0);
  const Tensor h1 = dense_attention_oracle(v, layer.heads[1], m, 0.5, 1.0);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      double s = v.at(i, c);
      for (std::size_t k = 0; k < 2; ++k) s += h0.at(i, k) * layer.w_o.at(k, c) + h1.at(i, k) * layer.w_o.at(2 + k, c);
      EXPECT_NEAR(out.at(i, c), s, 1e-12);
    }
  }
}

TEST(EncoderBlockTest, ZeroFeedForwardIsDoubleLayerNorm) {
  ModelParams p = ModelParams::init(tiny_config(6), 8);
  auto& layer = p.encoder.layers[0];
  for (Tensor* t : {&layer.ffn.w1, &layer.ffn.b1, &layer.ffn.w2, &layer.ffn.b2}) t->fill(0.0);
  std::mt19937_64 rng(8);
  const Tensor v = random_tensor({3, 4}, rng);
  const Tensor h = run([&](ParamBinding& b) { return encoder_block(b, b.tape().constant(v), layer); });
  const Tensor expected = layer_norm_oracle(layer_norm_oracle(v, layer.ln_attn), layer.ln_out);
  expect_near(h, expected, 1e-12);
}

TEST(EncoderBlockTest, ConstantRowsDependOnBiasesOnly) {
  ModelParams p = generic_params(tiny_config(6), 9);
  auto& layer = p.encoder.layers[0];
  Tensor v({3, 4});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 4; ++c) v.at(i, c) = static_cast<double>(i) * 2.0 - 1.0;
  }
  const Tensor h = run([&](ParamBinding& b) { return encoder_block(b, b.tape().constant(v), layer); });
  Tensor a({1, 4});
  for (std::size_t c = 0; c < 4; ++c) a[c] = layer.ln_attn.bias[c];
  const Tensor expected = run([&](ParamBinding& b) {
    const NodeId x = b.tape().constant(a);
    return ops::layer_norm(b.tape(), ops::add(b.tape(), feed_forward(b, x, layer.ffn), x), b(layer.ln_out.gain),
                           b(layer.ln_out.bias));
  });
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(h.at(i, c), expected[c], 1e-12);
  }
}

TEST(EncoderBlockTest, MatchesStepByStepOracle) {
  const ModelParams p = generic_params(tiny_config(6), 10);
  const auto& layer = p.encoder.layers[0];
  std::mt19937_64 rng(10);
  const Tensor v = random_tensor({5, 4}, rng);
  const Tensor h = run([&](ParamBinding& b) { return encoder_block(b, b.tape().constant(v), layer); });
  const Tensor a = layer_norm_oracle(v, layer.ln_attn);
  Tensor hidden = kernels::matmul(a, layer.ffn.w1);
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    for (std::size_t c = 0; c < hidden.cols(); ++c) hidden.at(i, c) = std::max(0.0, hidden.at(i, c) + layer.ffn.b1[c]);
  }
  Tensor ffn = kernels::matmul(hidden, layer.ffn.w2);
  for (std::size_t i = 0; i < ffn.rows(); ++i) {
    for (std::size_t c = 0; c < ffn.cols(); ++c) ffn.at(i, c) += layer.ffn.b2[c] + a.at(i, c);
  }
  expect_near(h, layer_norm_oracle(ffn, layer.ln_out), 1e-12);
}

TEST(EncodeTest, EmptyStackReturnsEmbeddings) {
  ModelConfig c = tiny_config(6);
  c.layers = 0;
  const ModelParams p = ModelParams::init(c, 11);
  std::mt19937_64 rng(11);
  const GraphInput g = input_with_mask(path_mask(4), rng, 6);
  const Tensor h = encode_graph(p, g);
  const Tensor v0 = run([&](ParamBinding& b) { return embed_vertices(b, p.encoder, g); });
  EXPECT_TRUE(h.bitwise_equal(v0));
}

TEST(EncodeTest, OneLayerIsBlockOfMultiHead) {
  const ModelParams p = generic_params(tiny_config(6), 12);
  std::mt19937_64 rng(12);
  const GraphInput g = input_with_mask(path_mask(4), rng, 6);
  const Tensor h = encode_graph(p, g);
  const Tensor manual = run([&](ParamBinding& b) {
    const NodeId v0 = embed_vertices(b, p.encoder, g);
    const auto n = AttentionNormalizer::fixed(1.5);
    return encoder_block(b, multi_head_graph_attention(b, v0, g.attention_mask(), p.encoder.layers[0], {n, n},
                                                       p.config.head_score_scale()),
                         p.encoder.layers[0]);
  });
  EXPECT_TRUE(h.bitwise_equal(manual));
}

TEST(EncodeTest, TwoLayerLocalityWithoutGlobal) {
  ModelConfig c = tiny_config(8, AlphaConfig{AlphaMode::Softmax, 1.5}, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ModelParams p = generic_params(c, seed);
    std::mt19937_64 rng(seed);
    const GraphInput g = input_with_mask(path_mask(5), rng, 8);
    const Tensor base = encode_graph(p, g);
    GraphInput far = g;
    far.labels[2] = (g.labels[2] + 1) % 8;  // two hops from vertex 0
    const Tensor moved = encode_graph(p, far);
    EXPECT_NE(moved.at(0, 0), base.at(0, 0));
    GraphInput farther = g;
    farther.labels[3] = (g.labels[3] + 1) % 8;  // three hops from 0
    const Tensor still = encode_graph(p, farther);
    for (std::size_t col = 0; col < 4; ++col) EXPECT_EQ(still.at(0, col), base.at(0, col));
  }
}

TEST(EncodeTest, MaskingSoundnessByGradient) {
  const ModelParams p = generic_params(tiny_config(8), 13);
  std::mt19937_64 rng(13);
  BoolMatrix m = path_mask(6);
  m.set(0, 5);
  m.set(5, 0);
  const GraphInput g = input_with_mask(m, rng, 8);
  const auto n = AttentionNormalizer::fixed(1.5);
  std::mt19937_64 vr(14);
  Tensor v = random_tensor({6, 4}, vr);
  for (std::size_t i = 0; i < 6; ++i) {
    Tape tape;
    ParamBinding bind(tape);
    const NodeId x = bind(v);
    const NodeId out = encoder_block(
        bind, multi_head_graph_attention(bind, x, g.attention_mask(), p.encoder.layers[0], {n, n}, 0.7),
        p.encoder.layers[0]);
    Tensor pick({6, 4});
    for (std::size_t c = 0; c < 4; ++c) pick.at(i, c) = 1.0 + static_cast<double>(c);
    const Gradients grads = tape.backward(check::weighted_sum(bind, out, pick));
    const Tensor& gv = grads.at(x);
    for (std::size_t j = 0; j < 6; ++j) {
      double mx = 0.0;
      for (std::size_t c = 0; c < 4; ++c) mx = std::max(mx, std::abs(gv.at(j, c)));
      if (m.get(i, j)) {
        EXPECT_GT(mx, 0.0) << i << "," << j;
      } else {
        EXPECT_EQ(mx, 0.0) << i << "," << j;
      }
    }
  }
}

TEST(EncodeTest, PermutationConsistencyIsExact) {
  const ModelParams p = generic_params(tiny_config(10, {}, 2), 15);
  std::mt19937_64 rng(15);
  const auto data = check::toy_data(5, 2);
  for (const auto& ex : data.encoded) {
    const GraphInput g = pad_graph(ex.graph, ex.graph.size());
    const std::size_t m = g.size();
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    GraphInput pg;
    pg.mask = BoolMatrix(m);
    for (std::size_t i = 0; i < m; ++i) {
      pg.labels.push_back(g.labels[perm[i]] % 10);
      pg.ranks.push_back(g.ranks[perm[i]]);
      pg.valid.push_back(1);
      for (std::size_t j = 0; j < m; ++j) pg.mask.set(i, j, g.mask.get(perm[i], perm[j]));
    }
    GraphInput g10 = g;
    for (int& l : g10.labels) l %= 10;
    const Tensor base = encode_graph(p, g10), moved = encode_graph(p, pg);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t col = 0; col < 4; ++col) EXPECT_EQ(moved.at(i, col), base.at(perm[i], col));
    }
  }
}

TEST(EncodeTest, SparsityUnderEntmaxButNotSoftmax) {
  int seeds_with_zero = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    for (AlphaConfig alpha : {AlphaConfig{AlphaMode::Fixed, 1.5}, AlphaConfig{AlphaMode::Softmax, 1.5}}) {
      ModelConfig c = tiny_config(12, alpha);
      c.d_model = 8;
      const ModelParams p = ModelParams::init(c, seed);
      const GraphInput g = input_with_mask(full_mask(8), rng, 12);
      AttentionStats stats;
      encode_graph(p, g, &stats);
      if (alpha.mode == AlphaMode::Softmax) {
        EXPECT_EQ(stats.zero_weights, 0u);
      } else if (stats.zero_weights > 0) {
        ++seeds_with_zero;
      }
    }
  }
  EXPECT_GT(seeds_with_zero, 50);
}

TEST(EncodeTest, TiedAlphaReadByEncoderAndDecoder) {
  ModelParams p = generic_params(tiny_config(10, AlphaConfig{AlphaMode::Learned, 1.5}), 16);
  const auto data = check::toy_data(1, 4);
  GraphInput g = data.encoded[0].graph;
  for (int& l : g.labels) l %= 10;
  const std::vector<int> prefix{Vocabulary::kBos, 5, 6, 7};
  const Tensor enc = encode_graph(p, g);
  const Tensor logits = full_prefix_logits(p, g, prefix);
  ASSERT_EQ(p.att_scalars.size(), 2u);
  EXPECT_EQ(p.head_alpha(0, 1), alpha_of(AlphaSpec::learned(p.att_scalar(0, 1)[0])));
  p.att_scalar(0, 1)[0] += 3.0;
  EXPECT_FALSE(encode_graph(p, g).bitwise_equal(enc));
  // Same memory, so any change here comes from the decoder reading the shared scalar.
  const auto memory = prepare_memory(p, g);
  ModelParams original = p;
  original.att_scalar(0, 1)[0] -= 3.0;
  DecodeState s1 = DecodeState::start(memory, p), s2 = DecodeState::start(memory, original);
  for (std::size_t t = 1; t < prefix.size(); ++t) {
    s1.push(prefix[t]);
    s2.push(prefix[t]);
  }
  EXPECT_FALSE(decode_step(s1, p).bitwise_equal(decode_step(s2, original)));
  EXPECT_FALSE(full_prefix_logits(p, g, prefix).bitwise_equal(logits));
}
