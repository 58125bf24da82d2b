// SPDX-License-Identifier: Apache-2.0
//
// Probability models for rate estimation and coding: the discretized
// conditional Gaussian, the learned per-channel factorized prior used for
// hyperpriors, quantizers and the integer frequency tables the range coder
// consumes.
#pragma once

#include <cstdint>
#include <vector>

#include "informer/layers.hpp"
#include "informer/tensor.hpp"

namespace informer {

// Likelihoods are clamped below at 2^-64 so their logarithm stays finite.
inline constexpr double kLikelihoodFloor = 0x1p-64;

double standard_normal_cdf(double x);

// P(v) of N(mu, sigma^2) convolved with U(-1/2, 1/2), in the symmetric form
// Phi((1/2 - |v - mu|) / sigma) - Phi((-1/2 - |v - mu|) / sigma).
double discretized_gaussian(double v, double mu, double sigma);

// Differentiable elementwise version of discretized_gaussian, floored at
// kLikelihoodFloor. Throws DomainError when any sigma <= 0.
Tensor gaussian_likelihood(const Tensor& v, const Tensor& mu, const Tensor& sigma);

// Sum of -log2(p). Throws DomainError on p <= 0 or p > 1.
double rate_bits(const Tensor& likelihoods);
// Differentiable form of rate_bits.
Tensor rate_bits_tensor(const Tensor& likelihoods);

// Integer frequency table over the symbols [min_symbol, min_symbol + size).
// Frequencies are >= 1 and sum to 2^precision_bits.
struct CmfTable {
  std::int32_t min_symbol = 0;
  unsigned precision_bits = 16;
  std::vector<std::uint32_t> freq;
  std::vector<std::uint32_t> cum;  // size() + 1 entries, cum[0] = 0

  std::size_t size() const { return freq.size(); }
  std::int32_t max_symbol() const { return min_symbol + static_cast<std::int32_t>(freq.size()) - 1; }
  std::uint32_t total() const { return 1u << precision_bits; }
  // -log2 of the coded probability of `symbol`.
  double cost_bits(std::int32_t symbol) const;

  // Symbols ascending as little-endian: i32 min symbol, u16 count, u16 freqs.
  std::vector<std::uint8_t> to_bytes() const;
  static CmfTable from_bytes(const std::vector<std::uint8_t>& bytes, unsigned precision_bits = 16);
};

// Quantizes a probability vector: f_i = 1 + floor(p_i * (T - n)), then the
// remainder goes one unit each to the largest-probability symbols, ties in
// index order. Throws DomainError when n > T.
CmfTable quantize_probabilities(const std::vector<double>& probs, std::int32_t min_symbol,
                                unsigned precision_bits = 16);

class GaussianConditional {
 public:
  explicit GaussianConditional(double scale_lower_bound = 0.11, double tail_mass = 1e-9)
      : scale_lower_bound_(scale_lower_bound), tail_mass_(tail_mass) {}

  double scale_lower_bound() const { return scale_lower_bound_; }
  double tail_mass() const { return tail_mass_; }

  // max(sigma_raw, scale_lower_bound)
  Tensor lower_bound_scale(const Tensor& sigma_raw) const;
  double lower_bound_scale(double sigma_raw) const;

  Tensor likelihood(const Tensor& v, const Tensor& mu, const Tensor& sigma) const {
    return gaussian_likelihood(v, mu, sigma);
  }

  // Per-symbol probabilities over [v_min, v_max] with the outermost bins
  // absorbing both tails.
  std::vector<double> symbol_probabilities(double mu, double sigma, std::int32_t v_min, std::int32_t v_max) const;
  CmfTable build_cmf(double mu, double sigma, std::int32_t v_min, std::int32_t v_max,
                     unsigned precision_bits = 16) const;

 private:
  double scale_lower_bound_;
  double tail_mass_;
};

// Learned univariate cumulative density per channel (monotone MLP of widths
// 1-3-3-3-1, softplus-positive matrices, tanh gating, final sigmoid).
class FactorizedPrior {
 public:
  static constexpr std::size_t kStages = 4;
  static constexpr std::size_t kHidden = 3;

  FactorizedPrior() = default;
  FactorizedPrior(std::size_t channels, RngState& rng);

  std::size_t channels() const { return channels_; }

  // CDF logits for v [..., C] (last axis is the channel).
  Tensor cdf_logits(const Tensor& v) const;
  // CDF(v + 1/2) - CDF(v - 1/2) per element of v [..., C], floored.
  Tensor likelihood(const Tensor& v) const;
  // Likelihood of values that all belong to one channel.
  Tensor channel_likelihood(const Tensor& v, std::size_t channel) const;

  // Scalar evaluation used for coding tables.
  double cdf(std::size_t channel, double x) const;
  std::vector<double> symbol_probabilities(std::size_t channel, std::int32_t v_min, std::int32_t v_max) const;
  CmfTable build_cmf(std::size_t channel, std::int32_t v_min, std::int32_t v_max, unsigned precision_bits = 16) const;

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  double logit(std::size_t channel, double x) const;

  std::size_t channels_ = 0;
  std::vector<Tensor> matrices_;  // [C, out, in], softplus-reparameterized
  std::vector<Tensor> biases_;    // [C, out, 1]
  std::vector<Tensor> factors_;   // [C, out, 1], tanh-bounded; first kStages-1 stages
};

enum class QuantizeMode { kTrainNoise, kEvalRound };

double round_half_away_from_zero(double x);

// kTrainNoise adds i.i.d. U(-1/2, 1/2) drawn from `rng`; the noise carries no
// gradient. kEvalRound rounds half away from zero and is not differentiable.
Tensor quantize(const Tensor& x, QuantizeMode mode, RngState* rng = nullptr);

}  // namespace informer
