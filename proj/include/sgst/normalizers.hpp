#pragma once

#include <span>
#include <vector>

namespace sgst {

// Output of a probability-normalizing map applied to one score vector.
struct NormalizerOutput {
  std::vector<double> probs;
  std::vector<bool> support;  // probs[i] > 0
  double tau = 0.0;           // threshold; 0 for softmax
};

// Sparsity exponent of an attention head: either a constant or 1 + sigmoid(att_scalar).
struct AlphaSpec {
  enum class Mode { Fixed, Learned };
  Mode mode = Mode::Fixed;
  double fixed_value = 1.5;
  double att_scalar = 0.0;

  static AlphaSpec fixed(double value);
  static AlphaSpec learned(double att_scalar);
};

inline constexpr int kMaxBisectionIters = 100;
inline constexpr double kAlphaFiniteDiffStep = 1e-4;
inline constexpr double kLearnedAlphaMin = 1.0 + 1e-3;
inline constexpr double kLearnedAlphaMax = 2.0 - 1e-3;

double sigmoid(double x);

NormalizerOutput softmax(std::span<const double> z);

// Threshold tau with sum_i max(0, (alpha-1) z_i - tau)^(1/(alpha-1)) = 1, found by bisection.
double find_tau(std::span<const double> z, double alpha);

// alpha-entmax. alpha == 2 and alpha == 1.5 use exact sort-based solvers; anything else bisects.
NormalizerOutput entmax(std::span<const double> z, double alpha);

// Individual solvers, exposed for cross-checking.
NormalizerOutput entmax_bisect(std::span<const double> z, double alpha);
NormalizerOutput sparsemax_exact(std::span<const double> z);
NormalizerOutput entmax15_exact(std::span<const double> z);

// Vector-Jacobian product of entmax at `out` with respect to the scores.
std::vector<double> entmax_backward(const NormalizerOutput& out, double alpha, std::span<const double> upstream);
std::vector<double> softmax_backward(const NormalizerOutput& out, std::span<const double> upstream);

// Effective alpha: fixed value, or 1 + sigmoid(att_scalar) clamped into [1+1e-3, 2-1e-3].
double alpha_of(const AlphaSpec& spec);

// <d entmax(z, alpha) / d alpha, upstream> with z held fixed, from the forward output `out`:
// dp_i/dalpha = (-p_i log p_i + (z_i - t) p_i^(2-alpha)) / (alpha - 1) on the support, where
// t = (sum z_j p_j^(2-alpha) - sum p_j log p_j) / sum p_j^(2-alpha) keeps the total at 1.
double entmax_alpha_derivative(std::span<const double> z, const NormalizerOutput& out, double alpha,
                               std::span<const double> upstream);
// Same quantity by central difference in alpha with step kAlphaFiniteDiffStep; used for cross-checks.
double entmax_alpha_derivative_fd(std::span<const double> z, double alpha, std::span<const double> upstream);

// d loss / d att_scalar for a learned head, given d loss / d probs.
double alpha_gradient(std::span<const double> z, const AlphaSpec& spec, std::span<const double> upstream);

}  // namespace sgst
