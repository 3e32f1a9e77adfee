#include "support.hpp"

#include <cmath>

#include "sgst/errors.hpp"

namespace sgst::check {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double stddev) {
  return Tensor::randn(shape, rng, stddev);
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

ModelConfig tiny_config(std::size_t vocab_size, AlphaConfig alpha, std::size_t layers) {
  ModelConfig c;
  c.layers = layers;
  c.heads = 2;
  c.d_model = 4;
  c.d_ff = 6;
  c.vocab_size = vocab_size;
  c.max_vertices = 24;
  c.max_len = 24;
  c.alpha = alpha;
  return c;
}

ModelParams generic_params(const ModelConfig& config, std::uint64_t seed, double stddev) {
  ModelParams p = ModelParams::init(config, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> dist(0.0, stddev);
  for (const auto& [name, t] : p.named()) {
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += dist(rng);
  }
  return p;
}

ToyData toy_data(std::size_t count, std::uint64_t seed, std::uint64_t first_index) {
  ToyData d;
  d.examples = generate_synthetic(SyntheticTaskSpec::defaults(seed), count, first_index);
  d.vocab = build_vocabulary(d.examples);
  d.encoded = encode_examples(d.examples, d.vocab);
  return d;
}

NodeId weighted_sum(ParamBinding& bind, NodeId out, const Tensor& weights) {
  Tape& tape = bind.tape();
  const NodeId w = tape.constant(weights);
  return ops::dot(tape, out, w);
}

std::vector<Tensor*> all_tensors(ModelParams& params) {
  std::vector<Tensor*> out;
  for (const auto& [name, t] : params.named()) out.push_back(t);
  return out;
}

GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor*>& wrt, double h) {
  AttentionStats base;
  base.record_support = true;
  Tape tape;
  ParamBinding bind(tape);
  const NodeId loss = build(bind, &base);
  Gradients grads = tape.backward(loss);

  const auto evaluate = [&](AttentionStats& stats) {
    Tape t(false);
    ParamBinding b(t);
    return t.value(build(b, &stats))[0];
  };

  GradCheckResult result;
  for (Tensor* x : wrt) {
    const auto id = bind.find(*x);
    Tensor analytic = (id && grads.has(*id)) ? grads.at(*id) : Tensor(x->shape());
    double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
    for (std::size_t k = 0; k < x->size(); ++k) {
      const double orig = (*x)[k];
      AttentionStats plus, minus;
      plus.record_support = minus.record_support = true;
      (*x)[k] = orig + h;
      const double fp = evaluate(plus);
      (*x)[k] = orig - h;
      const double fm = evaluate(minus);
      (*x)[k] = orig;
      if (plus.support_trace != base.support_trace || minus.support_trace != base.support_trace) {
        ++result.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(analytic[k] - numeric));
      max_a = std::max(max_a, std::abs(analytic[k]));
      max_n = std::max(max_n, std::abs(numeric));
      ++result.checked;
    }
    result.max_error = std::max(result.max_error, max_diff / std::max({max_a, max_n, 1e-8}));
  }
  return result;
}

}  // namespace sgst::check
