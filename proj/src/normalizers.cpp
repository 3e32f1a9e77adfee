#include "sgst/normalizers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "sgst/errors.hpp"

namespace sgst {

// Reductions below run over scores sorted in descending order. Sorting a multiset yields the same
// sequence for every permutation of the input, which makes every normalizer exactly
// permutation-equivariant.

namespace {

void require_nonempty(std::span<const double> z, const char* who) {
  if (z.empty()) throw ContractError(std::string(who) + ": empty score vector");
}

std::vector<double> sorted_desc(std::span<const double> z) {
  std::vector<double> s(z.begin(), z.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

NormalizerOutput single_entry(double tau) {
  return NormalizerOutput{{1.0}, {true}, tau};
}

void fill_support(NormalizerOutput& out) {
  out.support.resize(out.probs.size());
  for (std::size_t i = 0; i < out.probs.size(); ++i) out.support[i] = out.probs[i] > 0.0;
}

// Normalizes probs in place; the sum is taken in descending-value order.
void renormalize(std::vector<double>& probs) {
  std::vector<double> s = sorted_desc(probs);
  double total = 0.0;
  for (double v : s) total += v;
  for (auto& p : probs) p /= total;
}

}  // namespace

AlphaSpec AlphaSpec::fixed(double value) {
  if (!(value > 1.0 && value <= 2.0)) throw DomainError("fixed alpha must lie in (1, 2], got " + std::to_string(value));
  return AlphaSpec{Mode::Fixed, value, 0.0};
}

AlphaSpec AlphaSpec::learned(double att_scalar) { return AlphaSpec{Mode::Learned, 1.5, att_scalar}; }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

NormalizerOutput softmax(std::span<const double> z) {
  require_nonempty(z, "softmax");
  const double zmax = *std::max_element(z.begin(), z.end());
  NormalizerOutput out;
  out.probs.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out.probs[i] = std::exp(z[i] - zmax);
  renormalize(out.probs);
  fill_support(out);
  out.tau = 0.0;
  return out;
}

namespace {

// Bisection in the frame shifted by (alpha-1) * max z, where tau lies in [-1, 0].
double bisect_shifted_tau(const std::vector<double>& xs_desc, double alpha) {
  const double expo = 1.0 / (alpha - 1.0);
  auto mass = [&](double tau) {
    double total = 0.0;
    for (double x : xs_desc) {
      const double base = x - tau;
      if (base <= 0.0) break;
      total += std::pow(base, expo);
    }
    return total;
  };
  // Runs to the resolution of a double rather than stopping at a 1e-10 residual: that residual
  // shows up as ~1e-6 noise in small-step difference quotients through alpha.
  double lo = -1.0, hi = 0.0;
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < kMaxBisectionIters; ++iter) {
    mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f = mass(mid) - 1.0;
    if (f == 0.0) break;
    if (f > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

void require_alpha(double alpha) {
  if (!(alpha > 1.0)) throw DomainError("entmax requires alpha > 1, got " + std::to_string(alpha));
  if (!std::isfinite(alpha)) throw DomainError("entmax requires finite alpha");
}

}  // namespace

double find_tau(std::span<const double> z, double alpha) {
  require_alpha(alpha);
  require_nonempty(z, "find_tau");
  const double zmax = *std::max_element(z.begin(), z.end());
  const double a1 = alpha - 1.0;
  if (z.size() == 1) return a1 * zmax - 1.0;
  std::vector<double> xs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) xs[i] = a1 * (z[i] - zmax);
  std::sort(xs.begin(), xs.end(), std::greater<>());
  return bisect_shifted_tau(xs, alpha) + a1 * zmax;
}

NormalizerOutput entmax_bisect(std::span<const double> z, double alpha) {
  require_alpha(alpha);
  require_nonempty(z, "entmax");
  const double zmax = *std::max_element(z.begin(), z.end());
  const double a1 = alpha - 1.0;
  if (z.size() == 1) return single_entry(a1 * zmax - 1.0);
  std::vector<double> xs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) xs[i] = a1 * (z[i] - zmax);
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double tau = bisect_shifted_tau(sorted, alpha);
  const double expo = 1.0 / a1;
  NormalizerOutput out;
  out.probs.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double base = xs[i] - tau;
    out.probs[i] = base > 0.0 ? std::pow(base, expo) : 0.0;
  }
  renormalize(out.probs);
  fill_support(out);
  out.tau = tau + a1 * zmax;
  return out;
}

NormalizerOutput sparsemax_exact(std::span<const double> z) {
  require_nonempty(z, "sparsemax");
  const double zmax = *std::max_element(z.begin(), z.end());
  if (z.size() == 1) return single_entry(zmax - 1.0);
  std::vector<double> zs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zs[i] = z[i] - zmax;
  std::vector<double> sorted = sorted_desc(zs);
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumsum += sorted[k];
    const double kk = static_cast<double>(k + 1);
    if (1.0 + kk * sorted[k] > cumsum) tau = (cumsum - 1.0) / kk;
  }
  NormalizerOutput out;
  out.probs.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out.probs[i] = std::max(zs[i] - tau, 0.0);
  fill_support(out);
  out.tau = tau + zmax;
  return out;
}

NormalizerOutput entmax15_exact(std::span<const double> z) {
  require_nonempty(z, "entmax15");
  const double zmax = *std::max_element(z.begin(), z.end());
  if (z.size() == 1) return single_entry(0.5 * zmax - 1.0);
  std::vector<double> xs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) xs[i] = 0.5 * (z[i] - zmax);
  std::vector<double> sorted = sorted_desc(xs);
  double cs = 0.0, cs2 = 0.0;
  double tau_star = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cs += sorted[k];
    cs2 += sorted[k] * sorted[k];
    const double kk = static_cast<double>(k + 1);
    const double mean = cs / kk;
    const double mean_sq = cs2 / kk;
    const double delta = (1.0 - kk * (mean_sq - mean * mean)) / kk;
    const double tau_k = mean - std::sqrt(std::max(delta, 0.0));
    // Support sizes form a prefix of the sorted order; keep the last k whose threshold admits it.
    if (tau_k <= sorted[k]) tau_star = tau_k;
  }
  NormalizerOutput out;
  out.probs.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double base = std::max(xs[i] - tau_star, 0.0);
    out.probs[i] = base * base;
  }
  fill_support(out);
  out.tau = tau_star + 0.5 * zmax;
  return out;
}

NormalizerOutput entmax(std::span<const double> z, double alpha) {
  require_alpha(alpha);
  if (alpha == 2.0) return sparsemax_exact(z);
  if (alpha == 1.5) return entmax15_exact(z);
  return entmax_bisect(z, alpha);
}

std::vector<double> entmax_backward(const NormalizerOutput& out, double alpha, std::span<const double> upstream) {
  const std::size_t n = out.probs.size();
  if (upstream.size() != n) throw DimensionError("entmax_backward: upstream size mismatch");
  std::vector<double> s(n, 0.0);
  double s_sum = 0.0, s_dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.support[i]) continue;
    s[i] = alpha == 2.0 ? 1.0 : std::pow(out.probs[i], 2.0 - alpha);
    s_sum += s[i];
    s_dot += s[i] * upstream[i];
  }
  std::vector<double> grad(n, 0.0);
  if (s_sum == 0.0) return grad;
  const double q = s_dot / s_sum;
  for (std::size_t i = 0; i < n; ++i) grad[i] = s[i] * upstream[i] - q * s[i];
  return grad;
}

std::vector<double> softmax_backward(const NormalizerOutput& out, std::span<const double> upstream) {
  const std::size_t n = out.probs.size();
  if (upstream.size() != n) throw DimensionError("softmax_backward: upstream size mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += out.probs[i] * upstream[i];
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) grad[i] = out.probs[i] * (upstream[i] - dot);
  return grad;
}

double alpha_of(const AlphaSpec& spec) {
  if (spec.mode == AlphaSpec::Mode::Fixed) return spec.fixed_value;
  return std::clamp(1.0 + sigmoid(spec.att_scalar), kLearnedAlphaMin, kLearnedAlphaMax);
}

double entmax_alpha_derivative(std::span<const double> z, const NormalizerOutput& out, double alpha,
                               std::span<const double> upstream) {
  if (upstream.size() != z.size() || out.probs.size() != z.size()) {
    throw DimensionError("alpha derivative: size mismatch");
  }
  if (!(alpha > 1.0)) throw DomainError("alpha derivative needs alpha > 1");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = out.probs[i];
    if (p <= 0.0) continue;
    const double w = std::pow(p, 2.0 - alpha);
    num += z[i] * w - p * std::log(p);
    den += w;
  }
  const double t = num / den;
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = out.probs[i];
    if (p <= 0.0) continue;
    d += upstream[i] * (-p * std::log(p) + (z[i] - t) * std::pow(p, 2.0 - alpha));
  }
  return d / (alpha - 1.0);
}

double entmax_alpha_derivative_fd(std::span<const double> z, double alpha, std::span<const double> upstream) {
  if (upstream.size() != z.size()) throw DimensionError("alpha derivative: upstream size mismatch");
  if (z.size() == 1) return 0.0;
  const double h = kAlphaFiniteDiffStep;
  const NormalizerOutput plus = entmax_bisect(z, alpha + h);
  const NormalizerOutput minus = entmax_bisect(z, alpha - h);
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) d += (plus.probs[i] - minus.probs[i]) * upstream[i];
  return d / (2.0 * h);
}

double alpha_gradient(std::span<const double> z, const AlphaSpec& spec, std::span<const double> upstream) {
  if (spec.mode != AlphaSpec::Mode::Learned) throw ContractError("alpha_gradient requires a learned alpha");
  const double sg = sigmoid(spec.att_scalar);
  const double alpha = alpha_of(spec);
  return entmax_alpha_derivative(z, entmax(z, alpha), alpha, upstream) * sg * (1.0 - sg);
}

}  // namespace sgst
