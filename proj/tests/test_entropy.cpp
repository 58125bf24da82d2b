// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "informer/entropy.hpp"
#include "informer/error.hpp"
#include "test_util.hpp"

using namespace informer;
using informer::testing::random_tensor;
using informer::testing::to_vector;

TEST(DiscretizedGaussian, CenterBinMatchesErf) {
  // 2 Phi(1/2) - 1 = erf(1 / (2 sqrt 2)) = 0.3829249225480262
  EXPECT_NEAR(discretized_gaussian(0.0, 0.0, 1.0), 0.3829249225480262, 1e-12);
  EXPECT_NEAR(standard_normal_cdf(1.0), 0.8413447460685429, 1e-12);
}

TEST(DiscretizedGaussian, SymmetricInOffset) {
  EXPECT_NEAR(discretized_gaussian(3.0, 1.2, 0.7), discretized_gaussian(-0.6, 1.2, 0.7), 1e-15);
}

TEST(DiscretizedGaussian, SumsToOne) {
  RngState rng(1);
  for (int t = 0; t < 100; ++t) {
    const double mu = rng.uniform(-20, 20), sigma = rng.uniform(0.11, 30);
    double total = 0.0;
    const long lo = static_cast<long>(std::floor(mu - 40 * sigma)), hi = static_cast<long>(std::ceil(mu + 40 * sigma));
    for (long v = lo; v <= hi; ++v) total += discretized_gaussian(static_cast<double>(v), mu, sigma);
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(GaussianLikelihood, FloorsAndValidates) {
  const Tensor p = gaussian_likelihood(Tensor({1}, {1000.0}), Tensor({1}, {0.0}), Tensor({1}, {0.11}));
  EXPECT_EQ(p[0], kLikelihoodFloor);
  EXPECT_THROW(gaussian_likelihood(Tensor({1}, {0.0}), Tensor({1}, {0.0}), Tensor({1}, {0.0})), DomainError);
}

TEST(GaussianLikelihood, Gradient) {
  RngState rng(2);
  const Tensor v = random_tensor({6}, rng, -3, 3), mu = random_tensor({6}, rng, -3, 3);
  const Tensor sigma = random_tensor({6}, rng, 0.3, 3);
  EXPECT_LT(grad_check([](auto in) { return rate_bits_tensor(gaussian_likelihood(in[0], in[1], in[2])); },
                       {v, mu, sigma}, {1e-6, 0}),
            1e-5);
}

TEST(Rate, BitsAndValidation) {
  EXPECT_DOUBLE_EQ(rate_bits(Tensor({2}, {0.5, 0.25})), 3.0);
  EXPECT_THROW(rate_bits(Tensor({1}, {0.0})), DomainError);
  EXPECT_THROW(rate_bits(Tensor({1}, {1.5})), DomainError);
  EXPECT_DOUBLE_EQ(rate_bits_tensor(Tensor({2}, {0.5, 0.25})).item(), 3.0);
}

TEST(Cmf, FrequenciesArePositiveAndSumToTotal) {
  RngState rng(3);
  GaussianConditional g;
  for (int t = 0; t < 50; ++t) {
    const double mu = rng.uniform(-5, 5), sigma = rng.uniform(0.11, 8);
    const CmfTable c = g.build_cmf(mu, sigma, -30, 30);
    EXPECT_EQ(std::accumulate(c.freq.begin(), c.freq.end(), 0u), 1u << 16);
    for (auto f : c.freq) EXPECT_GE(f, 1u);
    EXPECT_EQ(c.cum.front(), 0u);
    EXPECT_EQ(c.cum.back(), 1u << 16);
  }
}

TEST(Cmf, RoundingRule) {
  // T = 16, n = 3: 1 + floor(p * 13) = {7, 4, 3}, the remainder 2 goes to
  // the most probable symbols first.
  const CmfTable c = quantize_probabilities({0.5, 0.3, 0.2}, -1, 4);
  EXPECT_EQ(c.freq, (std::vector<std::uint32_t>{8, 5, 3}));
  // Ties resolve by index.
  const CmfTable t = quantize_probabilities({0.25, 0.25, 0.25, 0.25}, 0, 3);
  EXPECT_EQ(t.freq, (std::vector<std::uint32_t>{2, 2, 2, 2}));
  const CmfTable u = quantize_probabilities({1.0 / 3, 1.0 / 3, 1.0 / 3}, 0, 3);
  EXPECT_EQ(u.freq, (std::vector<std::uint32_t>{3, 3, 2}));
}

TEST(Cmf, AlphabetTooLarge) {
  EXPECT_THROW(quantize_probabilities(std::vector<double>(17, 1.0 / 17), 0, 4), DomainError);
}

TEST(Cmf, CostAndSerialization) {
  const CmfTable c = quantize_probabilities({0.5, 0.25, 0.25}, 5, 4);
  EXPECT_NEAR(c.cost_bits(5), -std::log2(c.freq[0] / 16.0), 1e-12);
  const CmfTable r = CmfTable::from_bytes(c.to_bytes(), 4);
  EXPECT_EQ(r.freq, c.freq);
  EXPECT_EQ(r.cum, c.cum);
  EXPECT_EQ(r.min_symbol, 5);
}

TEST(GaussianConditional, TailsFoldIntoOuterBins) {
  GaussianConditional g;
  const auto p = g.symbol_probabilities(0.3, 2.0, -2, 2);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(p[0], standard_normal_cdf((-1.5 - 0.3) / 2.0), 1e-15);
  EXPECT_EQ(to_vector(g.lower_bound_scale(Tensor({2}, {0.01, 0.5}))), (std::vector<double>{0.11, 0.5}));
}

TEST(FactorizedPrior, InitialCdfIsLogistic) {
  RngState rng(4);
  FactorizedPrior prior(2, rng);
  // Monotone in x and within (0, 1).
  double prev = 0.0;
  for (double x = -10; x <= 10; x += 0.5) {
    const double c = prior.cdf(1, x);
    EXPECT_GT(c, prev);
    EXPECT_LT(c, 1.0);
    prev = c;
  }
}

TEST(FactorizedPrior, LikelihoodsNormalizeAndMatchScalarPath) {
  RngState rng(5);
  FactorizedPrior prior(3, rng);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const auto p = prior.symbol_probabilities(ch, -60, 60);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
  }
  const Tensor v({2, 3}, {0, 1, -2, 3, 0, 1});
  const Tensor lik = prior.likelihood(v);
  for (std::size_t i = 0; i < 6; ++i) {
    const std::size_t ch = i % 3;
    const double ref = prior.cdf(ch, v[i] + 0.5) - prior.cdf(ch, v[i] - 0.5);
    EXPECT_NEAR(lik[i], ref, 1e-12);
  }
}

TEST(FactorizedPrior, Gradient) {
  RngState rng(6);
  FactorizedPrior prior(2, rng);
  ParameterList params;
  prior.collect("p", params);
  std::vector<Tensor> inputs{random_tensor({3, 2}, rng, -2, 2)};
  for (auto& p : params) inputs.push_back(p.tensor);
  EXPECT_LT(grad_check([&](auto in) { return rate_bits_tensor(prior.likelihood(in[0])); }, inputs, {1e-6, 0}), 1e-5);
}

TEST(Quantize, RoundHalfAwayFromZero) {
  EXPECT_EQ(round_half_away_from_zero(0.5), 1.0);
  EXPECT_EQ(round_half_away_from_zero(-0.5), -1.0);
  EXPECT_EQ(round_half_away_from_zero(2.5), 3.0);
  EXPECT_EQ(round_half_away_from_zero(-2.4), -2.0);
}

TEST(Quantize, NoiseIsUniformWithZeroMean) {
  RngState rng(7);
  const Tensor x = Tensor::zeros({20000});
  const Tensor q = quantize(x, QuantizeMode::kTrainNoise, &rng);
  double m = 0.0, var = 0.0, lo = 1, hi = -1;
  for (double v : q.values()) {
    m += v;
    var += v * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  m /= 20000;
  var /= 20000;
  EXPECT_NEAR(m, 0.0, 0.01);           // sd of the mean is 0.002
  EXPECT_NEAR(var, 1.0 / 12.0, 0.003);
  EXPECT_GE(lo, -0.5);
  EXPECT_LE(hi, 0.5);
  EXPECT_THROW(quantize(x, QuantizeMode::kTrainNoise, nullptr), Error);
}

TEST(Quantize, NoiseCarriesIdentityGradient) {
  RngState rng(8);
  Tensor x = Tensor::parameter({3}, {0.2, 1.7, -3.1});
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(quantize(x, QuantizeMode::kTrainNoise, &rng));
  }
  tape.backward(loss);
  EXPECT_EQ(to_vector(Tensor({3}, {x.grad()[0], x.grad()[1], x.grad()[2]})), (std::vector<double>{1, 1, 1}));
}
