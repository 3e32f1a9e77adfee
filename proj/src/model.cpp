#include "sgst/model.hpp"

#include <cmath>
#include <sstream>

#include "sgst/errors.hpp"

namespace sgst {

AlphaConfig AlphaConfig::parse(const std::string& text) {
  if (text == "softmax") return {AlphaMode::Softmax, 0.0};
  if (text == "learned") return {AlphaMode::Learned, 0.0};
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text.substr(prefix.size()), &used);
    } catch (const std::exception&) {
      throw DomainError("cannot parse alpha value in \"" + text + "\"");
    }
    if (used != text.size() - prefix.size()) throw DomainError("cannot parse alpha value in \"" + text + "\"");
    AlphaSpec::fixed(v);  // range check
    return {AlphaMode::Fixed, v};
  }
  throw DomainError("alpha must be softmax, fixed:<v> or learned; got \"" + text + "\"");
}

std::string AlphaConfig::to_string() const {
  switch (mode) {
    case AlphaMode::Softmax: return "softmax";
    case AlphaMode::Learned: return "learned";
    case AlphaMode::Fixed: {
      std::ostringstream os;
      os.precision(17);
      os << "fixed:" << fixed_value;
      return os.str();
    }
  }
  return "softmax";
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.layers = 6;
  c.heads = 8;
  c.d_model = 512;
  c.d_ff = 2048;
  c.max_vertices = 128;
  c.max_len = 256;
  return c;
}

double ModelConfig::head_score_scale() const {
  return 1.0 / std::sqrt(static_cast<double>(literal_sqrt_d ? d_model : head_dim()));
}

double ModelConfig::context_score_scale() const { return 1.0 / std::sqrt(static_cast<double>(d_model)); }

void ModelConfig::validate() const {
  if (heads == 0 || d_model == 0 || d_ff == 0) throw ContractError("model dimensions must be positive");
  if (d_model % heads != 0) {
    throw ContractError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (vocab_size < 3) throw ContractError("vocabulary must at least hold PAD, BOS and EOS");
  if (max_vertices == 0 || max_len == 0) throw ContractError("capacities must be positive");
  if (alpha.mode == AlphaMode::Fixed) AlphaSpec::fixed(alpha.fixed_value);
}

namespace {

LayerNormParams make_ln(std::size_t d) { return {Tensor({d}, 1.0), Tensor({d}, 0.0)}; }

FeedForwardParams make_ffn(std::size_t d, std::size_t d_ff) {
  return {Tensor({d, d_ff}), Tensor({d_ff}), Tensor({d_ff, d}), Tensor({d})};
}

HeadParams make_head(std::size_t d, std::size_t dh) { return {Tensor({d, dh}), Tensor({d, dh}), Tensor({d, dh})}; }

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model, dh = config.head_dim(), v = config.vocab_size;
  ModelParams p;
  p.config = config;
  p.encoder.vertex_embedding = Tensor({v, d});
  p.encoder.positional = Tensor({config.max_vertices, d});
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayerParams layer;
    for (std::size_t h = 0; h < config.heads; ++h) layer.heads.push_back(make_head(d, dh));
    layer.w_o = Tensor({config.heads * dh, d});
    layer.ln_attn = make_ln(d);
    layer.ln_out = make_ln(d);
    layer.ffn = make_ffn(d, config.d_ff);
    p.encoder.layers.push_back(std::move(layer));
  }
  p.decoder.token_embedding = Tensor({v, d});
  for (std::size_t l = 0; l < config.layers; ++l) {
    DecoderLayerParams layer;
    for (std::size_t h = 0; h < config.heads; ++h) layer.self_heads.push_back(make_head(d, dh));
    layer.self_w_o = Tensor({config.heads * dh, d});
    layer.ln_self = make_ln(d);
    layer.context = {Tensor({d, d}), Tensor({d, d}), Tensor({d, d})};
    layer.ln_context = make_ln(d);
    layer.ffn = make_ffn(d, config.d_ff);
    layer.ln_out = make_ln(d);
    p.decoder.layers.push_back(std::move(layer));
  }
  p.decoder.w_out = Tensor({d, v});
  p.decoder.b_out = Tensor({v});
  if (config.alpha.mode == AlphaMode::Learned) {
    p.att_scalars.assign(config.layers * config.heads, Tensor({1}, 0.0));
  }
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  std::mt19937_64 rng(seed);
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  for (auto& [name, t] : p.named()) {
    if (ends_with(name, ".gain")) {
      t->fill(1.0);
    } else if (ends_with(name, ".bias") || ends_with(name, ".b1") || ends_with(name, ".b2") ||
               ends_with(name, "b_out") || ends_with(name, "att_scalar")) {
      t->fill(0.0);
    } else if (ends_with(name, "embedding") || ends_with(name, "positional")) {
      *t = Tensor::randn(t->shape(), rng, 1.0);
    } else {
      *t = Tensor::randn(t->shape(), rng, proj_std);
    }
  }
  return p;
}

namespace {

template <typename Self, typename Out>
void collect(Self& p, std::vector<Out>& out) {
  auto add = [&](std::string name, auto& t) { out.push_back(Out{std::move(name), &t}); };
  auto add_ln = [&](const std::string& prefix, auto& ln) {
    add(prefix + ".gain", ln.gain);
    add(prefix + ".bias", ln.bias);
  };
  auto add_ffn = [&](const std::string& prefix, auto& f) {
    add(prefix + ".w1", f.w1);
    add(prefix + ".b1", f.b1);
    add(prefix + ".w2", f.w2);
    add(prefix + ".b2", f.b2);
  };
  add("encoder.vertex_embedding", p.encoder.vertex_embedding);
  add("encoder.positional", p.encoder.positional);
  for (std::size_t l = 0; l < p.encoder.layers.size(); ++l) {
    auto& layer = p.encoder.layers[l];
    const std::string pre = "encoder.layer" + std::to_string(l);
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      const std::string hp = pre + ".head" + std::to_string(h);
      add(hp + ".wq", layer.heads[h].wq);
      add(hp + ".wk", layer.heads[h].wk);
      add(hp + ".wv", layer.heads[h].wv);
    }
    add(pre + ".w_o", layer.w_o);
    add_ln(pre + ".ln_attn", layer.ln_attn);
    add_ln(pre + ".ln_out", layer.ln_out);
    add_ffn(pre + ".ffn", layer.ffn);
  }
  add("decoder.token_embedding", p.decoder.token_embedding);
  for (std::size_t l = 0; l < p.decoder.layers.size(); ++l) {
    auto& layer = p.decoder.layers[l];
    const std::string pre = "decoder.layer" + std::to_string(l);
    for (std::size_t h = 0; h < layer.self_heads.size(); ++h) {
      const std::string hp = pre + ".self.head" + std::to_string(h);
      add(hp + ".wq", layer.self_heads[h].wq);
      add(hp + ".wk", layer.self_heads[h].wk);
      add(hp + ".wv", layer.self_heads[h].wv);
    }
    add(pre + ".self.w_o", layer.self_w_o);
    add_ln(pre + ".ln_self", layer.ln_self);
    add(pre + ".context.wq", layer.context.wq);
    add(pre + ".context.wk", layer.context.wk);
    add(pre + ".context.wg", layer.context.wg);
    add_ln(pre + ".ln_context", layer.ln_context);
    add_ffn(pre + ".ffn", layer.ffn);
    add_ln(pre + ".ln_out", layer.ln_out);
  }
  add("decoder.w_out", p.decoder.w_out);
  add("decoder.b_out", p.decoder.b_out);
  const std::size_t heads = p.config.heads;
  for (std::size_t i = 0; i < p.att_scalars.size(); ++i) {
    add("alpha.layer" + std::to_string(i / heads) + ".head" + std::to_string(i % heads) + ".att_scalar",
        p.att_scalars[i]);
  }
}

}  // namespace

std::vector<NamedTensor> ModelParams::named() {
  std::vector<NamedTensor> out;
  collect(*this, out);
  return out;
}

std::vector<ConstNamedTensor> ModelParams::named() const {
  std::vector<ConstNamedTensor> out;
  collect(*this, out);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : named()) n += nt.tensor->size();
  return n;
}

Tensor& ModelParams::att_scalar(std::size_t layer, std::size_t head) {
  if (att_scalars.empty()) throw ContractError("model has no learned alpha scalars");
  return att_scalars.at(layer * config.heads + head);
}

const Tensor& ModelParams::att_scalar(std::size_t layer, std::size_t head) const {
  if (att_scalars.empty()) throw ContractError("model has no learned alpha scalars");
  return att_scalars.at(layer * config.heads + head);
}

double ModelParams::head_alpha(std::size_t layer, std::size_t head) const {
  switch (config.alpha.mode) {
    case AlphaMode::Softmax: return 1.0;
    case AlphaMode::Fixed: return config.alpha.fixed_value;
    case AlphaMode::Learned: return alpha_of(AlphaSpec::learned(att_scalar(layer, head)[0]));
  }
  return 1.0;
}

NodeId ParamBinding::operator()(const Tensor& param) {
  auto it = nodes_.find(&param);
  if (it != nodes_.end()) return it->second;
  const NodeId id = tape_.parameter(param);
  nodes_.emplace(&param, id);
  return id;
}

std::optional<NodeId> ParamBinding::find(const Tensor& param) const {
  auto it = nodes_.find(&param);
  if (it == nodes_.end()) return std::nullopt;
  return it->second;
}

AttentionNormalizer head_normalizer(const ModelParams& params, ParamBinding& bind, std::size_t layer, std::size_t head) {
  switch (params.config.alpha.mode) {
    case AlphaMode::Softmax: return AttentionNormalizer::softmax();
    case AlphaMode::Fixed: return AttentionNormalizer::fixed(params.config.alpha.fixed_value);
    case AlphaMode::Learned: return AttentionNormalizer::learned(bind(params.att_scalar(layer, head)));
  }
  return AttentionNormalizer::softmax();
}

Tensor sinusoidal_positions(std::size_t n, std::size_t d) {
  Tensor pe({n, d});
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace sgst
