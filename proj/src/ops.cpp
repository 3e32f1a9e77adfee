#include "sgst/ops.hpp"

#include <cmath>
#include <memory>

#include "sgst/errors.hpp"

namespace sgst {

AttentionMask AttentionMask::full(std::size_t rows, std::size_t cols) {
  AttentionMask m;
  m.kind = Kind::Full;
  m.rows = rows;
  m.cols = cols;
  return m;
}

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m;
  m.kind = Kind::Causal;
  m.rows = n;
  m.cols = n;
  return m;
}

AttentionMask AttentionMask::explicit_mask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> allowed) {
  if (allowed.size() != rows * cols) throw DimensionError("attention mask size does not match rows x cols");
  AttentionMask m;
  m.kind = Kind::Explicit;
  m.rows = rows;
  m.cols = cols;
  m.allowed = std::move(allowed);
  return m;
}

bool AttentionMask::allows(std::size_t i, std::size_t j) const {
  if (!key_valid.empty() && !key_valid[j]) return false;
  switch (kind) {
    case Kind::Full: return true;
    case Kind::Causal: return j <= i;
    case Kind::Explicit: return allowed[i * cols + j] != 0;
  }
  return false;
}

void AttentionStats::observe(const NormalizerOutput& out) {
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    const bool zero = out.probs[i] == 0.0;
    zero_weights += zero ? 1 : 0;
    if (record_support) support_trace.push_back(zero ? 0 : 1);
  }
  total_weights += out.probs.size();
}

NormalizerOutput normalize_scores(std::span<const double> z, AttentionNormalizer::Kind kind, double alpha) {
  if (kind == AttentionNormalizer::Kind::Softmax) return softmax(z);
  return entmax(z, alpha);
}

double effective_alpha(const Tape& tape, const AttentionNormalizer& normalizer) {
  if (normalizer.kind == AttentionNormalizer::Kind::Softmax) return 1.0;
  if (normalizer.att_scalar) return alpha_of(AlphaSpec::learned(tape.value(*normalizer.att_scalar)[0]));
  return normalizer.fixed_alpha;
}

namespace ops {

namespace {

void accumulate(Tape& tape, NodeId id, const Tensor& delta) {
  if (tape.requires_grad(id)) tape.grad(id) += delta;
}

const Tensor& require_matrix(const Tape& tape, NodeId id, const char* what) {
  const Tensor& t = tape.value(id);
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
  return t;
}

}  // namespace

NodeId matmul(Tape& tape, NodeId a, NodeId b) {
  Tensor out = kernels::matmul(tape.value(a), tape.value(b));
  return tape.push(OpKind::Matmul, {a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += kernels::matmul_bt(g, t.value(b));
    if (t.requires_grad(b)) t.grad(b) += kernels::matmul_at(t.value(a), g);
  });
}

NodeId add(Tape& tape, NodeId a, NodeId b) {
  const Tensor& va = tape.value(a);
  const Tensor& vb = tape.value(b);
  if (!va.same_shape(vb)) {
    throw DimensionError("add shape mismatch: " + shape_string(va.shape()) + " vs " + shape_string(vb.shape()));
  }
  Tensor out = va;
  out += vb;
  return tape.push(OpKind::Add, {a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

NodeId add_row(Tape& tape, NodeId x, NodeId bias) {
  const Tensor& vx = require_matrix(tape, x, "add_row");
  const Tensor& vb = tape.value(bias);
  if (vb.size() != vx.cols()) {
    throw DimensionError("add_row bias " + shape_string(vb.shape()) + " does not fit " + shape_string(vx.shape()));
  }
  Tensor out = vx;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += vb[c];
  }
  return tape.push(OpKind::AddRow, {x, bias}, std::move(out), [x, bias](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    accumulate(t, x, g);
    if (t.requires_grad(bias)) {
      Tensor& gb = t.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
    }
  });
}

NodeId scale(Tape& tape, NodeId x, double factor) {
  Tensor out = tape.value(x);
  out.scale(factor);
  return tape.push(OpKind::Scale, {x}, std::move(out), [x, factor](Tape& t, NodeId self) {
    Tensor g = t.grad(self);
    accumulate(t, x, g.scale(factor));
  });
}

NodeId relu(Tape& tape, NodeId x) {
  Tensor out = tape.value(x);
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return tape.push(OpKind::Relu, {x}, std::move(out), [x](Tape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

NodeId layer_norm(Tape& tape, NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& vx = tape.value(x);
  const std::size_t d = vx.cols();
  if (d == 0) throw DimensionError("layer_norm over an empty axis");
  if (!(eps > 0.0)) throw DomainError("layer_norm eps must be positive");
  const Tensor& vg = tape.value(gain);
  const Tensor& vb = tape.value(bias);
  if (vg.size() != d || vb.size() != d) throw DimensionError("layer_norm gain/bias do not match width " + std::to_string(d));
  const std::size_t rows = vx.rows();
  Tensor out(vx.shape());
  auto xhat = std::make_shared<Tensor>(vx.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = vx.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    auto xh = xhat->row(r);
    auto o = out.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (in[j] - mean) * inv;
      o[j] = xh[j] * vg[j] + vb[j];
    }
  }
  return tape.push(OpKind::LayerNorm, {x, gain, bias}, std::move(out),
                   [x, gain, bias, xhat, inv_std, d](Tape& t, NodeId self) {
                     const Tensor& g = t.grad(self);
                     const Tensor& vg = t.value(gain);
                     const bool want_x = t.requires_grad(x);
                     Tensor* gg = t.requires_grad(gain) ? &t.grad(gain) : nullptr;
                     Tensor* gb = t.requires_grad(bias) ? &t.grad(bias) : nullptr;
                     Tensor* gx = want_x ? &t.grad(x) : nullptr;
                     std::vector<double> dy(d);
                     for (std::size_t r = 0; r < g.rows(); ++r) {
                       auto gr = g.row(r);
                       auto xh = xhat->row(r);
                       double mean_dy = 0.0, mean_dy_xh = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         if (gg) (*gg)[j] += gr[j] * xh[j];
                         if (gb) (*gb)[j] += gr[j];
                         dy[j] = gr[j] * vg[j];
                         mean_dy += dy[j];
                         mean_dy_xh += dy[j] * xh[j];
                       }
                       if (!gx) continue;
                       mean_dy /= static_cast<double>(d);
                       mean_dy_xh /= static_cast<double>(d);
                       auto out = gx->row(r);
                       const double inv = (*inv_std)[r];
                       for (std::size_t j = 0; j < d; ++j) out[j] += inv * (dy[j] - mean_dy - xh[j] * mean_dy_xh);
                     }
                   });
}

NodeId gather_rows(Tape& tape, NodeId table, std::vector<int> ids) {
  const Tensor& vt = require_matrix(tape, table, "gather_rows");
  const std::size_t d = vt.cols();
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vt.rows()) {
      throw CapacityError("row index " + std::to_string(ids[r]) + " outside table of " + std::to_string(vt.rows()) +
                          " rows");
    }
    auto src = vt.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return tape.push(OpKind::Gather, {table}, std::move(out), [table, ids = std::move(ids)](Tape& t, NodeId self) {
    if (!t.requires_grad(table)) return;
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(table);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto src = g.row(r);
      auto dst = gt.row(static_cast<std::size_t>(ids[r]));
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

NodeId concat_cols(Tape& tape, const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one part");
  const std::size_t rows = require_matrix(tape, parts[0], "concat_cols").rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (NodeId p : parts) {
    const Tensor& v = require_matrix(tape, p, "concat_cols");
    if (v.rows() != rows) throw DimensionError("concat_cols row counts differ");
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = tape.value(parts[k]);
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = v.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += widths[k];
  }
  return tape.push(OpKind::ConcatCols, parts, std::move(out), [parts, widths](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (t.requires_grad(parts[k])) {
        Tensor& gp = t.grad(parts[k]);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row(r);
          auto dst = gp.row(r);
          for (std::size_t c = 0; c < widths[k]; ++c) dst[c] += src[offset + c];
        }
      }
      offset += widths[k];
    }
  });
}

NodeId sum(Tape& tape, NodeId x) {
  double s = 0.0;
  for (double v : tape.value(x).values()) s += v;
  return tape.push(OpKind::Sum, {x}, Tensor::scalar(s), [x](Tape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(x).values()) v += g;
  });
}

NodeId dot(Tape& tape, NodeId x, NodeId y) {
  const Tensor& vx = tape.value(x);
  const Tensor& vy = tape.value(y);
  if (vx.size() != vy.size()) throw DimensionError("dot size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i) s += vx[i] * vy[i];
  return tape.push(OpKind::Dot, {x, y}, Tensor::scalar(s), [x, y](Tape& t, NodeId self) {
    const double g = t.grad(self)[0];
    if (t.requires_grad(x)) {
      Tensor d = t.value(y);
      t.grad(x) += d.scale(g);
    }
    if (t.requires_grad(y)) {
      Tensor d = t.value(x);
      t.grad(y) += d.scale(g);
    }
  });
}

namespace {

struct AttentionRow {
  std::vector<std::size_t> keys;
  std::vector<double> scores;
  NormalizerOutput weights;
};

}  // namespace

NodeId attention(Tape& tape, NodeId q, NodeId k, NodeId v, const AttentionMask& mask,
                 const AttentionNormalizer& normalizer, double score_scale, AttentionStats* stats) {
  const Tensor& vq = require_matrix(tape, q, "attention queries");
  const Tensor& vk = require_matrix(tape, k, "attention keys");
  const Tensor& vv = require_matrix(tape, v, "attention values");
  const std::size_t m = vq.rows(), n = vk.rows(), dh = vq.cols(), dv = vv.cols();
  if (vk.cols() != dh) throw DimensionError("attention query/key widths differ");
  if (vv.rows() != n) throw DimensionError("attention keys/values counts differ");
  if (mask.rows != m || mask.cols != n) {
    throw DimensionError("attention mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                         " does not fit " + std::to_string(m) + "x" + std::to_string(n));
  }
  const double alpha = effective_alpha(tape, normalizer);
  auto rows = std::make_shared<std::vector<AttentionRow>>(m);
  Tensor out({m, dv});
  for (std::size_t i = 0; i < m; ++i) {
    AttentionRow& row = (*rows)[i];
    const double* qi = vq.data() + i * dh;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask.allows(i, j)) continue;
      const double* kj = vk.data() + j * dh;
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
      row.keys.push_back(j);
      row.scores.push_back(s * score_scale);
    }
    if (row.keys.empty()) continue;
    row.weights = normalize_scores(row.scores, normalizer.kind, alpha);
    if (stats) stats->observe(row.weights);
    kernels::weighted_row_sum(row.keys, row.weights.probs, vv.data(), dv, out.row(i));
  }
  std::vector<NodeId> inputs{q, k, v};
  if (normalizer.att_scalar) inputs.push_back(*normalizer.att_scalar);
  return tape.push(
      OpKind::Attention, std::move(inputs), std::move(out),
      [q, k, v, normalizer, score_scale, alpha, rows](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& vq = t.value(q);
        const Tensor& vk = t.value(k);
        const Tensor& vv = t.value(v);
        const std::size_t dh = vq.cols(), dv = vv.cols();
        Tensor* gq = t.requires_grad(q) ? &t.grad(q) : nullptr;
        Tensor* gk = t.requires_grad(k) ? &t.grad(k) : nullptr;
        Tensor* gv = t.requires_grad(v) ? &t.grad(v) : nullptr;
        const bool learned = normalizer.att_scalar && t.requires_grad(*normalizer.att_scalar);
        double d_alpha = 0.0;
        std::vector<double> d_weights;
        for (std::size_t i = 0; i < rows->size(); ++i) {
          const AttentionRow& row = (*rows)[i];
          if (row.keys.empty()) continue;
          const double* gi = g.data() + i * dv;
          d_weights.assign(row.keys.size(), 0.0);
          for (std::size_t a = 0; a < row.keys.size(); ++a) {
            const std::size_t j = row.keys[a];
            const double* vj = vv.data() + j * dv;
            double s = 0.0;
            for (std::size_t c = 0; c < dv; ++c) s += gi[c] * vj[c];
            d_weights[a] = s;
            const double w = row.weights.probs[a];
            if (gv && w != 0.0) {
              double* gvj = gv->data() + j * dv;
              for (std::size_t c = 0; c < dv; ++c) gvj[c] += w * gi[c];
            }
          }
          const std::vector<double> d_scores = normalizer.kind == AttentionNormalizer::Kind::Softmax
                                                   ? softmax_backward(row.weights, d_weights)
                                                   : entmax_backward(row.weights, alpha, d_weights);
          if (learned) d_alpha += entmax_alpha_derivative(row.scores, row.weights, alpha, d_weights);
          const double* qi = vq.data() + i * dh;
          for (std::size_t a = 0; a < row.keys.size(); ++a) {
            const double ds = d_scores[a] * score_scale;
            if (ds == 0.0) continue;
            const std::size_t j = row.keys[a];
            if (gq) {
              const double* kj = vk.data() + j * dh;
              double* gqi = gq->data() + i * dh;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
            }
            if (gk) {
              double* gkj = gk->data() + j * dh;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
        if (learned) {
          const double s = sigmoid(t.value(*normalizer.att_scalar)[0]);
          t.grad(*normalizer.att_scalar)[0] += d_alpha * s * (1.0 - s);
        }
      });
}

NodeId nll_loss(Tape& tape, NodeId logits, std::vector<int> targets, std::vector<std::uint8_t> pad_mask) {
  const Tensor& vl = require_matrix(tape, logits, "nll_loss");
  const std::size_t n = vl.rows(), vocab = vl.cols();
  if (targets.size() != n || pad_mask.size() != n) throw DimensionError("nll_loss targets/pad mask do not match logits rows");
  std::size_t count = 0;
  for (auto p : pad_mask) count += p ? 0 : 1;
  if (count == 0) throw ContractError("nll_loss: every position is padding");
  auto probs = std::make_shared<Tensor>(vl.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (pad_mask[r]) continue;
    const int target = targets[r];
    if (target < 0 || static_cast<std::size_t>(target) >= vocab) throw DimensionError("nll_loss target id out of range");
    auto row = vl.row(r);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    const double lse = mx + std::log(z);
    total += lse - row[static_cast<std::size_t>(target)];
    auto pr = probs->row(r);
    for (std::size_t c = 0; c < vocab; ++c) pr[c] = std::exp(row[c] - lse);
  }
  const double denom = static_cast<double>(count);
  return tape.push(OpKind::NllLoss, {logits}, Tensor::scalar(total / denom),
                   [logits, probs, targets = std::move(targets), pad_mask = std::move(pad_mask), denom](Tape& t,
                                                                                                          NodeId self) {
                     if (!t.requires_grad(logits)) return;
                     const double g = t.grad(self)[0] / denom;
                     Tensor& gl = t.grad(logits);
                     for (std::size_t r = 0; r < targets.size(); ++r) {
                       if (pad_mask[r]) continue;
                       auto pr = probs->row(r);
                       auto out = gl.row(r);
                       for (std::size_t c = 0; c < pr.size(); ++c) out[c] += g * pr[c];
                       out[static_cast<std::size_t>(targets[r])] -= g;
                     }
                   });
}

}  // namespace ops

}  // namespace sgst
