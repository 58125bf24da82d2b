// SPDX-License-Identifier: Apache-2.0
//
// Neural building blocks: affine maps, convolutions, GDN/IGDN, layer norm,
// multi-head attention, MLP blocks and the causal 5x5 masked convolution.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "informer/ops.hpp"
#include "informer/tensor.hpp"

namespace informer {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

Tensor uniform_parameter(Shape shape, double bound, RngState& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim, RngState& rng);

  // x [..., in] -> [..., out]
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  std::size_t in_dim() const { return weight_.dim(0); }
  std::size_t out_dim() const { return weight_.dim(1); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // [in, out]
  Tensor bias_;    // [out]
};

class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, int stride, int padding,
              RngState& rng, std::optional<Tensor> mask = std::nullopt);

  Tensor forward(const Tensor& x) const;
  // Single output pixel, bitwise equal to forward() at that position.
  std::vector<double> forward_at(const Tensor& x, std::size_t h, std::size_t w) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  const Tensor& kernels() const { return kernels_; }
  const Tensor& bias() const { return bias_; }
  const std::optional<Tensor>& mask() const { return mask_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }

 private:
  Tensor kernels_;
  Tensor bias_;
  std::optional<Tensor> mask_;
  int stride_ = 1;
  int padding_ = 0;
};

class ConvTranspose2dLayer {
 public:
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, int stride,
                       int padding, int output_padding, RngState& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor kernels_;
  Tensor bias_;
  int stride_ = 1;
  int padding_ = 0;
  int output_padding_ = 0;
};

// Generalized divisive normalization over channels:
//   forward: out_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)
//   inverse: out_i = x_i * sqrt(beta_i + sum_j gamma_ij x_j^2)
class GdnLayer {
 public:
  static constexpr double kBetaMin = 1e-6;

  GdnLayer() = default;
  GdnLayer(std::size_t channels, bool inverse);
  GdnLayer(Tensor beta, Tensor gamma, bool inverse);

  Tensor forward(const Tensor& x) const;  // [H, W, C]
  // Clamps beta >= kBetaMin and gamma >= 0 in place. Call after each
  // optimizer step.
  void project();
  void collect(const std::string& prefix, ParameterList& out) const;

  const Tensor& beta() const { return beta_; }
  const Tensor& gamma() const { return gamma_; }
  bool inverse() const { return inverse_; }

 private:
  Tensor beta_;   // [C]
  Tensor gamma_;  // [C, C], row i weights the squares feeding channel i
  bool inverse_ = false;
};

class LayerNorm {
 public:
  static constexpr double kEpsilon = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor forward(const Tensor& x) const;  // normalizes the last axis
  void collect(const std::string& prefix, ParameterList& out) const;

  std::span<double> mutable_scale() { return scale_.mutable_values(); }
  std::span<double> mutable_shift() { return shift_.mutable_values(); }

 private:
  Tensor scale_;
  Tensor shift_;
};

// Additive attention mask value for blocked entries.
inline constexpr double kMaskBlocked = -1e9;

// Lower-triangular mask [L, L]: entry (i, j) is 0 when j < i, blocked otherwise.
Tensor strictly_causal_attention_mask(std::size_t length);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t model_dim, std::size_t num_heads, RngState& rng);

  // q [Lq, D], k and v [Lk, D], mask [Lq, Lk] additive (0 keep, kMaskBlocked
  // block). Scaled dot-product attention per head with scale
  // 1/sqrt(D/heads), heads concatenated then projected by W_o.
  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::optional<Tensor>& mask = std::nullopt) const;
  // Per-head softmax weights [heads, Lq, Lk].
  Tensor attention_weights(const Tensor& q, const Tensor& k, const std::optional<Tensor>& mask = std::nullopt) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  std::size_t model_dim() const { return model_dim_; }
  std::size_t num_heads() const { return num_heads_; }
  Linear& query() { return wq_; }
  Linear& key() { return wk_; }
  Linear& value() { return wv_; }
  Linear& output() { return wo_; }

 private:
  Tensor split_heads(const Tensor& x) const;  // [L, D] -> [h, L, D/h]

  std::size_t model_dim_ = 0;
  std::size_t num_heads_ = 0;
  Linear wq_, wk_, wv_, wo_;
};

// Two affine layers with a leaky ReLU between.
class MlpBlock {
 public:
  MlpBlock() = default;
  MlpBlock(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, RngState& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t out_dim() const { return fc2_.out_dim(); }

 private:
  Linear fc1_, fc2_;
};

// Pre-norm cross attention: x + MHA(LN_q(x), LN_kv(kv), LN_kv(kv)).
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(std::size_t dim, std::size_t num_heads, RngState& rng);

  Tensor forward(const Tensor& x, const Tensor& kv) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  MultiHeadAttention& attention() { return mha_; }

 private:
  LayerNorm norm_q_, norm_kv_;
  MultiHeadAttention mha_;
};

// Pre-norm residual MLP: x + MLP(LN(x)).
class MlpResidualBlock {
 public:
  MlpResidualBlock() = default;
  MlpResidualBlock(std::size_t dim, std::size_t hidden_dim, RngState& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  LayerNorm norm_;
  MlpBlock mlp_;
};

// Strictly causal pre-norm self attention over raster-ordered rows:
// x + MHA(LN(x), LN(x), LN(x)) where row i attends rows j < i. Row 0 has no
// keys and receives a zero attention contribution.
class MaskedSelfAttentionBlock {
 public:
  MaskedSelfAttentionBlock() = default;
  MaskedSelfAttentionBlock(std::size_t dim, std::size_t num_heads, RngState& rng);

  Tensor forward(const Tensor& x) const;  // [L, D]
  // Output row for a query given its raster predecessors `prefix` [i, D]
  // (empty tensor when i == 0).
  Tensor forward_row(const Tensor& row, const Tensor& prefix) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  LayerNorm norm_;
  MultiHeadAttention mha_;
};

// Causal mask for a k x k kernel: 1 strictly before the center in raster
// order, 0 at the center and after.
Tensor causal_conv_mask(std::size_t kernel);

// 5x5 stride-1 padding-2 convolution with the causal mask.
class MaskedConvLayer {
 public:
  static constexpr std::size_t kKernel = 5;

  MaskedConvLayer() = default;
  MaskedConvLayer(std::size_t in_channels, std::size_t out_channels, RngState& rng);

  Tensor forward(const Tensor& y_hat) const;
  std::vector<double> forward_at(const Tensor& y_hat, std::size_t h, std::size_t w) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  const Conv2dLayer& conv() const { return conv_; }

 private:
  Conv2dLayer conv_;
};

}  // namespace informer
