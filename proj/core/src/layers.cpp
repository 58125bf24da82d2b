// SPDX-License-Identifier: Apache-2.0
#include "informer/layers.hpp"

#include <cmath>

#include "informer/error.hpp"

namespace informer {

Tensor uniform_parameter(Shape shape, double bound, RngState& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Linear::Linear(std::size_t in_dim, std::size_t out_dim, RngState& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  weight_ = uniform_parameter({in_dim, out_dim}, bound, rng);
  bias_ = uniform_parameter({out_dim}, bound, rng);
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight_), bias_); }

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

Conv2dLayer::Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, int stride,
                         int padding, RngState& rng, std::optional<Tensor> mask)
    : mask_(std::move(mask)), stride_(stride), padding_(padding) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(kernel * kernel * in_channels));
  kernels_ = uniform_parameter({kernel, kernel, in_channels, out_channels}, bound, rng);
  bias_ = uniform_parameter({out_channels}, bound, rng);
}

Tensor Conv2dLayer::forward(const Tensor& x) const { return conv2d(x, kernels_, bias_, stride_, padding_, mask_); }

std::vector<double> Conv2dLayer::forward_at(const Tensor& x, std::size_t h, std::size_t w) const {
  return conv2d_at(x, kernels_, bias_, stride_, padding_, mask_, h, w);
}

void Conv2dLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".kernels", kernels_});
  out.push_back({prefix + ".bias", bias_});
}

ConvTranspose2dLayer::ConvTranspose2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                           int stride, int padding, int output_padding, RngState& rng)
    : stride_(stride), padding_(padding), output_padding_(output_padding) {
  // Each output pixel sees roughly (k/stride)^2 * Cin inputs.
  const double taps = static_cast<double>(kernel * kernel * in_channels) / (stride * stride);
  const double bound = 1.0 / std::sqrt(taps);
  kernels_ = uniform_parameter({kernel, kernel, in_channels, out_channels}, bound, rng);
  bias_ = uniform_parameter({out_channels}, bound, rng);
}

Tensor ConvTranspose2dLayer::forward(const Tensor& x) const {
  return conv_transpose2d(x, kernels_, bias_, stride_, padding_, output_padding_);
}

void ConvTranspose2dLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".kernels", kernels_});
  out.push_back({prefix + ".bias", bias_});
}

GdnLayer::GdnLayer(std::size_t channels, bool inverse) : inverse_(inverse) {
  beta_ = Tensor::parameter({channels}, std::vector<double>(channels, 1.0));
  std::vector<double> g(channels * channels, 0.0);
  for (std::size_t i = 0; i < channels; ++i) g[i * channels + i] = 0.1;
  gamma_ = Tensor::parameter({channels, channels}, std::move(g));
}

GdnLayer::GdnLayer(Tensor beta, Tensor gamma, bool inverse)
    : beta_(std::move(beta)), gamma_(std::move(gamma)), inverse_(inverse) {
  const std::size_t c = beta_.numel();
  if (beta_.rank() != 1 || gamma_.shape() != Shape{c, c}) throw ShapeError("GDN expects beta [C], gamma [C, C]");
}

Tensor GdnLayer::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != beta_.numel()) throw ShapeError("GDN input must be [H, W, C]");
  for (double b : beta_.values()) {
    if (!(b > 0.0)) throw DomainError("GDN beta must be positive");
  }
  const Shape shape = x.shape();
  const std::size_t c = shape[2];
  const Tensor flat = reshape(square(x), {shape[0] * shape[1], c});
  const Tensor norm = sqrt(add(matmul(flat, permute(gamma_, {1, 0})), beta_));
  const Tensor norm_img = reshape(norm, shape);
  return inverse_ ? mul(x, norm_img) : div(x, norm_img);
}

void GdnLayer::project() {
  for (double& b : beta_.mutable_values()) b = std::max(b, kBetaMin);
  for (double& g : gamma_.mutable_values()) g = std::max(g, 0.0);
}

void GdnLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".beta", beta_});
  out.push_back({prefix + ".gamma", gamma_});
}

LayerNorm::LayerNorm(std::size_t dim) {
  scale_ = Tensor::parameter({dim}, std::vector<double>(dim, 1.0));
  shift_ = Tensor::parameter({dim}, std::vector<double>(dim, 0.0));
}

Tensor LayerNorm::forward(const Tensor& x) const {
  const Tensor mu = reduce(ReduceKind::kMean, x, {-1}, true);
  const Tensor centered = sub(x, mu);
  const Tensor var = reduce(ReduceKind::kMean, square(centered), {-1}, true);
  const Tensor normalized = div(centered, sqrt(add_scalar(var, kEpsilon)));
  return add(mul(normalized, scale_), shift_);
}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".scale", scale_});
  out.push_back({prefix + ".shift", shift_});
}

Tensor strictly_causal_attention_mask(std::size_t length) {
  std::vector<double> m(length * length, kMaskBlocked);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j < i; ++j) m[i * length + j] = 0.0;
  }
  return Tensor({length, length}, std::move(m));
}

MultiHeadAttention::MultiHeadAttention(std::size_t model_dim, std::size_t num_heads, RngState& rng)
    : model_dim_(model_dim), num_heads_(num_heads) {
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ShapeError("model dim " + std::to_string(model_dim) + " not divisible by " + std::to_string(num_heads) +
                     " heads");
  }
  wq_ = Linear(model_dim, model_dim, rng);
  wk_ = Linear(model_dim, model_dim, rng);
  wv_ = Linear(model_dim, model_dim, rng);
  wo_ = Linear(model_dim, model_dim, rng);
}

Tensor MultiHeadAttention::split_heads(const Tensor& x) const {
  const std::size_t len = x.dim(0);
  return permute(reshape(x, {len, num_heads_, model_dim_ / num_heads_}), {1, 0, 2});
}

Tensor MultiHeadAttention::attention_weights(const Tensor& q, const Tensor& k, const std::optional<Tensor>& mask) const {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != model_dim_ || k.dim(1) != model_dim_) {
    throw ShapeError("attention inputs must be [L, " + std::to_string(model_dim_) + "]");
  }
  if (mask && mask->shape() != Shape{q.dim(0), k.dim(0)}) throw ShapeError("attention mask must be [Lq, Lk]");
  const Tensor qh = split_heads(wq_.forward(q));
  const Tensor kt = permute(split_heads(wk_.forward(k)), {0, 2, 1});
  const double head_dim = static_cast<double>(model_dim_ / num_heads_);
  Tensor scores = scale(matmul(qh, kt), 1.0 / std::sqrt(head_dim));
  if (mask) scores = add(scores, *mask);
  return softmax(scores, -1);
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const std::optional<Tensor>& mask) const {
  if (v.rank() != 2 || v.dim(0) != k.dim(0)) throw ShapeError("attention keys and values differ in length");
  const Tensor weights = attention_weights(q, k, mask);
  const Tensor heads = matmul(weights, split_heads(wv_.forward(v)));  // [h, Lq, dh]
  const Tensor merged = reshape(permute(heads, {1, 0, 2}), {q.dim(0), model_dim_});
  return wo_.forward(merged);
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  wq_.collect(prefix + ".q", out);
  wk_.collect(prefix + ".k", out);
  wv_.collect(prefix + ".v", out);
  wo_.collect(prefix + ".o", out);
}

MlpBlock::MlpBlock(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, RngState& rng)
    : fc1_(in_dim, hidden_dim, rng), fc2_(hidden_dim, out_dim, rng) {}

Tensor MlpBlock::forward(const Tensor& x) const { return fc2_.forward(leaky_relu(fc1_.forward(x))); }

void MlpBlock::collect(const std::string& prefix, ParameterList& out) const {
  fc1_.collect(prefix + ".fc1", out);
  fc2_.collect(prefix + ".fc2", out);
}

CrossAttentionBlock::CrossAttentionBlock(std::size_t dim, std::size_t num_heads, RngState& rng)
    : norm_q_(dim), norm_kv_(dim), mha_(dim, num_heads, rng) {}

Tensor CrossAttentionBlock::forward(const Tensor& x, const Tensor& kv) const {
  const Tensor kv_n = norm_kv_.forward(kv);
  return add(x, mha_.forward(norm_q_.forward(x), kv_n, kv_n));
}

void CrossAttentionBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm_q_.collect(prefix + ".norm_q", out);
  norm_kv_.collect(prefix + ".norm_kv", out);
  mha_.collect(prefix + ".mha", out);
}

MlpResidualBlock::MlpResidualBlock(std::size_t dim, std::size_t hidden_dim, RngState& rng)
    : norm_(dim), mlp_(dim, hidden_dim, dim, rng) {}

Tensor MlpResidualBlock::forward(const Tensor& x) const { return add(x, mlp_.forward(norm_.forward(x))); }

void MlpResidualBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm_.collect(prefix + ".norm", out);
  mlp_.collect(prefix + ".mlp", out);
}

MaskedSelfAttentionBlock::MaskedSelfAttentionBlock(std::size_t dim, std::size_t num_heads, RngState& rng)
    : norm_(dim), mha_(dim, num_heads, rng) {}

Tensor MaskedSelfAttentionBlock::forward(const Tensor& x) const {
  const std::size_t len = x.dim(0);
  const Tensor xn = norm_.forward(x);
  const Tensor attended = mha_.forward(xn, xn, xn, strictly_causal_attention_mask(len));
  // Row 0 has an empty key set.
  std::vector<double> keep(len, 1.0);
  keep[0] = 0.0;
  return add(x, mul(attended, Tensor({len, 1}, std::move(keep))));
}

Tensor MaskedSelfAttentionBlock::forward_row(const Tensor& row, const Tensor& prefix) const {
  if (!prefix.defined()) return row;
  const Tensor qn = norm_.forward(row);
  const Tensor kn = norm_.forward(prefix);
  return add(row, mha_.forward(qn, kn, kn));
}

void MaskedSelfAttentionBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm_.collect(prefix + ".norm", out);
  mha_.collect(prefix + ".mha", out);
}

Tensor causal_conv_mask(std::size_t kernel) {
  std::vector<double> m(kernel * kernel, 0.0);
  const std::size_t center = (kernel * kernel) / 2;
  for (std::size_t t = 0; t < center; ++t) m[t] = 1.0;
  return Tensor({kernel, kernel}, std::move(m));
}

MaskedConvLayer::MaskedConvLayer(std::size_t in_channels, std::size_t out_channels, RngState& rng)
    : conv_(in_channels, out_channels, kKernel, 1, static_cast<int>(kKernel / 2), rng, causal_conv_mask(kKernel)) {}

Tensor MaskedConvLayer::forward(const Tensor& y_hat) const { return conv_.forward(y_hat); }

std::vector<double> MaskedConvLayer::forward_at(const Tensor& y_hat, std::size_t h, std::size_t w) const {
  return conv_.forward_at(y_hat, h, w);
}

void MaskedConvLayer::collect(const std::string& prefix, ParameterList& out) const { conv_.collect(prefix, out); }

}  // namespace informer
