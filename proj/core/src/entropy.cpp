// SPDX-License-Identifier: Apache-2.0
#include "informer/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "informer/error.hpp"

namespace informer {

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double softplus_scalar(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

// p = s * (sigmoid(s * upper) - sigmoid(s * lower)) with s = -sign(lower +
// upper), evaluated in whichever tail keeps the difference accurate.
Tensor sigmoid_interval(const Tensor& lower, const Tensor& upper) {
  if (lower.shape() != upper.shape()) throw ShapeError("sigmoid_interval shapes differ");
  const auto lv = lower.values();
  const auto uv = upper.values();
  std::vector<double> out(lv.size());
  std::vector<char> floored(lv.size(), 0);
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double s = (lv[i] + uv[i]) > 0.0 ? -1.0 : 1.0;
    double p = s * (sigmoid_scalar(s * uv[i]) - sigmoid_scalar(s * lv[i]));
    if (!(p >= kLikelihoodFloor)) {
      p = kLikelihoodFloor;
      floored[i] = 1;
    }
    out[i] = p;
  }
  Tensor result(lower.shape(), std::move(out));
  if (should_record({&lower, &upper})) {
    active_tape()->record(result, [lower, upper, result, floored]() mutable {
      const auto g = result.grad();
      const auto lv = lower.values();
      const auto uv = upper.values();
      std::vector<double> gl(lv.size(), 0.0), gu(uv.size(), 0.0);
      for (std::size_t i = 0; i < lv.size(); ++i) {
        if (floored[i]) continue;
        const double su = sigmoid_scalar(uv[i]);
        const double sl = sigmoid_scalar(lv[i]);
        gu[i] = g[i] * su * (1.0 - su);
        gl[i] = -g[i] * sl * (1.0 - sl);
      }
      accumulate_grad(lower, gl);
      accumulate_grad(upper, gu);
    });
  }
  return result;
}

}  // namespace

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double discretized_gaussian(double v, double mu, double sigma) {
  const double a = std::abs(v - mu);
  return standard_normal_cdf((0.5 - a) / sigma) - standard_normal_cdf((-0.5 - a) / sigma);
}

Tensor gaussian_likelihood(const Tensor& v, const Tensor& mu, const Tensor& sigma) {
  if (v.shape() != mu.shape() || v.shape() != sigma.shape()) {
    throw ShapeError("gaussian_likelihood needs equal shapes, got " + shape_str(v.shape()) + ", " +
                     shape_str(mu.shape()) + ", " + shape_str(sigma.shape()));
  }
  const auto vv = v.values();
  const auto mv = mu.values();
  const auto sv = sigma.values();
  std::vector<double> out(vv.size());
  std::vector<char> floored(vv.size(), 0);
  for (std::size_t i = 0; i < vv.size(); ++i) {
    if (!(sv[i] > 0.0)) throw DomainError("gaussian_likelihood requires sigma > 0");
    double p = discretized_gaussian(vv[i], mv[i], sv[i]);
    if (!(p >= kLikelihoodFloor)) {
      p = kLikelihoodFloor;
      floored[i] = 1;
    }
    out[i] = p;
  }
  Tensor result(v.shape(), std::move(out));
  if (should_record({&v, &mu, &sigma})) {
    active_tape()->record(result, [v, mu, sigma, result, floored]() mutable {
      const auto g = result.grad();
      const auto vv = v.values();
      const auto mv = mu.values();
      const auto sv = sigma.values();
      const std::size_t n = vv.size();
      std::vector<double> gv(n, 0.0), gm(n, 0.0), gs(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (floored[i]) continue;
        const double d = vv[i] - mv[i];
        const double a = std::abs(d);
        const double s = sv[i];
        const double upper = (0.5 - a) / s;
        const double lower = (-0.5 - a) / s;
        const double pu = normal_pdf(upper);
        const double pl = normal_pdf(lower);
        const double dp_da = (pl - pu) / s;
        const double dp_dd = d > 0 ? dp_da : (d < 0 ? -dp_da : 0.0);
        gv[i] = g[i] * dp_dd;
        gm[i] = -g[i] * dp_dd;
        gs[i] = g[i] * (lower * pl - upper * pu) / s;
      }
      accumulate_grad(v, gv);
      accumulate_grad(mu, gm);
      accumulate_grad(sigma, gs);
    });
  }
  return result;
}

double rate_bits(const Tensor& likelihoods) {
  double bits = 0.0;
  for (double p : likelihoods.values()) {
    if (!(p > 0.0) || p > 1.0) throw DomainError("likelihood outside (0, 1]");
    bits -= std::log2(p);
  }
  return bits;
}

Tensor rate_bits_tensor(const Tensor& likelihoods) {
  return scale(sum(log(likelihoods)), -1.0 / std::numbers::ln2);
}

double CmfTable::cost_bits(std::int32_t symbol) const {
  if (symbol < min_symbol || symbol > max_symbol()) throw DomainError("symbol outside CMF alphabet");
  return static_cast<double>(precision_bits) -
         std::log2(static_cast<double>(freq[static_cast<std::size_t>(symbol - min_symbol)]));
}

std::vector<std::uint8_t> CmfTable::to_bytes() const {
  std::vector<std::uint8_t> out;
  const auto min_u = static_cast<std::uint32_t>(min_symbol);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(min_u >> (8 * b)));
  const auto n = static_cast<std::uint16_t>(freq.size());
  out.push_back(static_cast<std::uint8_t>(n));
  out.push_back(static_cast<std::uint8_t>(n >> 8));
  for (auto f : freq) {
    if (f > 0xFFFF) throw DomainError("frequency does not fit 16 bits");
    out.push_back(static_cast<std::uint8_t>(f));
    out.push_back(static_cast<std::uint8_t>(f >> 8));
  }
  return out;
}

CmfTable CmfTable::from_bytes(const std::vector<std::uint8_t>& bytes, unsigned precision_bits) {
  if (bytes.size() < 6) throw FormatError("CMF table truncated");
  std::uint32_t min_u = 0;
  for (int b = 0; b < 4; ++b) min_u |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  const std::size_t n = bytes[4] | (static_cast<std::size_t>(bytes[5]) << 8);
  if (bytes.size() != 6 + 2 * n || n == 0) throw FormatError("CMF table length mismatch");
  CmfTable t;
  t.min_symbol = static_cast<std::int32_t>(min_u);
  t.precision_bits = precision_bits;
  t.freq.resize(n);
  t.cum.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    t.freq[i] = bytes[6 + 2 * i] | (static_cast<std::uint32_t>(bytes[7 + 2 * i]) << 8);
    if (t.freq[i] == 0) throw FormatError("CMF table has a zero frequency");
    t.cum[i + 1] = t.cum[i] + t.freq[i];
  }
  if (t.cum[n] != t.total()) throw FormatError("CMF table does not sum to 2^precision");
  return t;
}

CmfTable quantize_probabilities(const std::vector<double>& probs, std::int32_t min_symbol, unsigned precision_bits) {
  const std::size_t n = probs.size();
  const std::uint64_t total = 1ull << precision_bits;
  if (n == 0) throw DomainError("empty alphabet");
  if (n > total) throw DomainError("alphabet of " + std::to_string(n) + " symbols exceeds 2^" +
                                   std::to_string(precision_bits));
  CmfTable t;
  t.min_symbol = min_symbol;
  t.precision_bits = precision_bits;
  t.freq.resize(n);
  const double spare = static_cast<double>(total - n);
  double mass = 0.0;
  for (double p : probs) mass += std::clamp(p, 0.0, 1.0);
  const double norm = mass > 1.0 ? 1.0 / mass : 1.0;
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(probs[i], 0.0, 1.0) * norm;
    t.freq[i] = 1 + static_cast<std::uint32_t>(std::floor(p * spare));
    used += t.freq[i];
  }
  if (used > total) throw DomainError("probabilities sum above one");
  std::uint64_t remainder = total - used;
  if (remainder > 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    for (std::size_t i = 0; remainder > 0; i = (i + 1) % n, --remainder) ++t.freq[order[i]];
  }
  t.cum.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + t.freq[i];
  return t;
}

Tensor GaussianConditional::lower_bound_scale(const Tensor& sigma_raw) const {
  return clamp_min(sigma_raw, scale_lower_bound_);
}

double GaussianConditional::lower_bound_scale(double sigma_raw) const {
  return sigma_raw < scale_lower_bound_ ? scale_lower_bound_ : sigma_raw;
}

std::vector<double> GaussianConditional::symbol_probabilities(double mu, double sigma, std::int32_t v_min,
                                                              std::int32_t v_max) const {
  if (v_min > v_max) throw DomainError("empty alphabet");
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  const std::size_t n = static_cast<std::size_t>(v_max - v_min) + 1;
  std::vector<double> p(n);
  if (n == 1) {
    p[0] = 1.0;
    return p;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) p[i] = discretized_gaussian(v_min + static_cast<double>(i), mu, sigma);
  p[0] = standard_normal_cdf((v_min + 0.5 - mu) / sigma);
  p[n - 1] = standard_normal_cdf((mu - v_max + 0.5) / sigma);
  double total = 0.0;
  for (double x : p) total += x;
  if (total < 1.0 - tail_mass_) throw DomainError("alphabet misses more than tail_mass of probability");
  return p;
}

CmfTable GaussianConditional::build_cmf(double mu, double sigma, std::int32_t v_min, std::int32_t v_max,
                                        unsigned precision_bits) const {
  return quantize_probabilities(symbol_probabilities(mu, sigma, v_min, v_max), v_min, precision_bits);
}

FactorizedPrior::FactorizedPrior(std::size_t channels, RngState& rng) : channels_(channels) {
  const std::size_t dims[kStages + 1] = {1, kHidden, kHidden, kHidden, 1};
  for (std::size_t k = 0; k < kStages; ++k) {
    const std::size_t out = dims[k + 1];
    const std::size_t in = dims[k];
    // Each stage starts as an average so the initial CDF is a unit logistic.
    const double init = inverse_softplus(1.0 / static_cast<double>(out));
    matrices_.push_back(Tensor::parameter({channels, out, in}, std::vector<double>(channels * out * in, init)));
    biases_.push_back(uniform_parameter({channels, out, 1}, 0.5, rng));
    if (k + 1 < kStages) {
      factors_.push_back(Tensor::parameter({channels, out, 1}, std::vector<double>(channels * out, 0.0)));
    }
  }
}

Tensor FactorizedPrior::cdf_logits(const Tensor& v) const {
  if (v.rank() < 1 || v.dim(-1) != channels_) throw ShapeError("factorized prior expects [..., C] input");
  const Shape shape = v.shape();
  const std::size_t count = v.numel() / channels_;
  // [L, C] -> [C, 1, L]
  Tensor x = reshape(permute(reshape(v, {count, channels_}), {1, 0}), {channels_, 1, count});
  for (std::size_t k = 0; k < kStages; ++k) {
    x = add(matmul(softplus(matrices_[k]), x), biases_[k]);
    if (k + 1 < kStages) x = add(x, mul(tanh(factors_[k]), tanh(x)));
  }
  return reshape(permute(reshape(x, {channels_, count}), {1, 0}), shape);
}

Tensor FactorizedPrior::likelihood(const Tensor& v) const {
  const Tensor lower = cdf_logits(add_scalar(v, -0.5));
  const Tensor upper = cdf_logits(add_scalar(v, 0.5));
  return sigmoid_interval(lower, upper);
}

Tensor FactorizedPrior::channel_likelihood(const Tensor& v, std::size_t channel) const {
  if (channel >= channels_) throw ShapeError("channel out of range");
  const std::size_t n = v.numel();
  // Embed into a [n, C] tensor whose other channels are ignored.
  std::vector<double> sel(channels_, 0.0);
  sel[channel] = 1.0;
  const Tensor wide = mul(reshape(v, {n, 1}), Tensor({1, channels_}, sel));
  const Tensor p = likelihood(wide);
  return reshape(slice(p, 1, channel, 1), v.shape());
}

double FactorizedPrior::logit(std::size_t channel, double x) const {
  std::vector<double> act{x};
  const std::size_t dims[kStages + 1] = {1, kHidden, kHidden, kHidden, 1};
  for (std::size_t k = 0; k < kStages; ++k) {
    const std::size_t out = dims[k + 1];
    const std::size_t in = dims[k];
    const auto h = matrices_[k].values().subspan(channel * out * in, out * in);
    const auto b = biases_[k].values().subspan(channel * out, out);
    std::vector<double> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += softplus_scalar(h[o * in + i]) * act[i];
      next[o] = acc + b[o];
    }
    if (k + 1 < kStages) {
      const auto a = factors_[k].values().subspan(channel * out, out);
      for (std::size_t o = 0; o < out; ++o) next[o] += std::tanh(a[o]) * std::tanh(next[o]);
    }
    act = std::move(next);
  }
  return act[0];
}

double FactorizedPrior::cdf(std::size_t channel, double x) const {
  if (channel >= channels_) throw ShapeError("channel out of range");
  return sigmoid_scalar(logit(channel, x));
}

std::vector<double> FactorizedPrior::symbol_probabilities(std::size_t channel, std::int32_t v_min,
                                                          std::int32_t v_max) const {
  if (v_min > v_max) throw DomainError("empty alphabet");
  const std::size_t n = static_cast<std::size_t>(v_max - v_min) + 1;
  std::vector<double> p(n);
  if (n == 1) {
    p[0] = 1.0;
    return p;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double v = v_min + static_cast<double>(i);
    const double lower = logit(channel, v - 0.5);
    const double upper = logit(channel, v + 0.5);
    const double s = (lower + upper) > 0.0 ? -1.0 : 1.0;
    p[i] = std::max(0.0, s * (sigmoid_scalar(s * upper) - sigmoid_scalar(s * lower)));
  }
  p[0] = sigmoid_scalar(logit(channel, v_min + 0.5));
  p[n - 1] = sigmoid_scalar(-logit(channel, v_max - 0.5));
  return p;
}

CmfTable FactorizedPrior::build_cmf(std::size_t channel, std::int32_t v_min, std::int32_t v_max,
                                    unsigned precision_bits) const {
  return quantize_probabilities(symbol_probabilities(channel, v_min, v_max), v_min, precision_bits);
}

void FactorizedPrior::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t k = 0; k < kStages; ++k) {
    out.push_back({prefix + ".matrix" + std::to_string(k), matrices_[k]});
    out.push_back({prefix + ".bias" + std::to_string(k), biases_[k]});
    if (k + 1 < kStages) out.push_back({prefix + ".factor" + std::to_string(k), factors_[k]});
  }
}

double round_half_away_from_zero(double x) { return std::round(x); }

Tensor quantize(const Tensor& x, QuantizeMode mode, RngState* rng) {
  if (mode == QuantizeMode::kEvalRound) {
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = round_half_away_from_zero(xv[i]);
    return Tensor(x.shape(), std::move(out));
  }
  if (!rng) throw ConfigError("noise quantization needs an RNG");
  std::vector<double> noise(x.numel());
  for (double& u : noise) u = rng->uniform(-0.5, 0.5);
  return add(x, Tensor(x.shape(), std::move(noise)));
}

}  // namespace informer
