// SPDX-License-Identifier: Apache-2.0
//
// The compression network: analysis/synthesis transforms, the global
// (attention-pooled) and local (1x1) hyperprior models, the masked-conv
// context model, the attention-based parameter model, and the ablation
// variants built from the same parts.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "informer/entropy.hpp"
#include "informer/layers.hpp"

namespace informer {

enum class Variant : std::uint8_t {
  kInformer = 0,
  kContextHyperprior = 1,
  kHyperpriorOnly = 2,
  kContextOnly = 3,
  kGlobalContext = 4,
  kInformerWoLocal = 5,
  kInformerWoGlobal = 6,
  kInformerLocalQuery = 7,  // psi_l queries psi_g; phi concatenated after the MLP
};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
std::optional<Variant> variant_from_id(std::uint8_t id);
const std::vector<Variant>& all_variants();

// Which sub-networks a variant wires in.
struct VariantTraits {
  bool context = false;          // 5x5 masked conv over y_hat
  bool global_hyper = false;     // attention-pooled z_g
  bool local_hyper = false;      // 1x1 z_l
  bool spatial_hyper = false;    // strided hyperprior z (h_a / h_s)
  bool global_context = false;   // masked self attention over phi
  bool attention_head = false;   // parameter model with the MLP block
  bool local_query = false;
};
VariantTraits variant_traits(Variant v);

struct ModelConfig {
  std::size_t latent_channels = 32;      // C
  std::size_t global_tokens = 8;         // N
  std::size_t num_heads = 4;
  std::size_t transform_channels = 32;
  Variant variant = Variant::kInformer;
  double lambda = 0.01;
  std::uint64_t seed = 0;                // parameter initialization

  void validate() const;  // throws ConfigError
};

struct LatentState {
  Tensor y;
  Tensor y_hat;
  Tensor z_g;      // [N, C/N]
  Tensor z_g_hat;
  Tensor z_l;      // [H, W, C/16] local, or the strided hyperprior for spatial variants
  Tensor z_l_hat;
};

struct DistributionParams {
  Tensor mu;     // [H, W, C]
  Tensor sigma;  // [H, W, C], lower-bounded
};

struct ForwardResult {
  LatentState latents;
  DistributionParams params;
  Tensor x_hat;         // unclamped reconstruction [H0, W0, 3]
  Tensor rate_y_bits;   // scalars
  Tensor rate_zl_bits;
  Tensor rate_zg_bits;
  Tensor mse;
  Tensor loss;
  std::size_t pixels = 0;

  double total_bits() const;
  double bpp() const { return total_bits() / static_cast<double>(pixels); }
};

class InformerModel {
 public:
  static constexpr std::size_t kDownsample = 16;

  explicit InformerModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const VariantTraits& traits() const { return traits_; }
  std::size_t channels() const { return config_.latent_channels; }

  ParameterList parameters() const;
  // Re-projects GDN parameters onto beta >= 1e-6, gamma >= 0.
  void project_constraints();
  // FNV-1a over config and parameter values; tags bitstreams.
  std::uint64_t hash() const;

  Tensor analysis(const Tensor& x) const;          // [H0, W0, 3] -> [H0/16, W0/16, C]
  Tensor synthesis(const Tensor& y_hat) const;     // inverse shape map
  Tensor global_hyper_encode(const Tensor& y) const;   // -> [N, C/N]
  Tensor global_hyper_decode(const Tensor& z_g_hat) const;  // -> [N, 2C]
  Tensor local_hyper_encode(const Tensor& y) const;    // -> [H, W, C/16]
  Tensor local_hyper_decode(const Tensor& z_l_hat) const;   // -> [H, W, 2C]
  Tensor spatial_hyper_encode(const Tensor& y) const;  // -> [ceil(H/4), ceil(W/4), C]
  Tensor spatial_hyper_decode(const Tensor& z_hat, std::size_t h, std::size_t w) const;  // -> [h, w, 2C]
  Tensor context(const Tensor& y_hat) const;           // -> phi [H, W, 2C]
  // Causal self attention over raster-ordered phi rows [H*W, 2C].
  Tensor global_context_forward(const Tensor& phi_rows) const;

  // Parameter model on rows: phi_rows [L, 2C] (after global context when
  // present), psi_g [N, 2C], side_rows [L, 2C] (psi_l or the spatial
  // hyperprior features). Undefined tensors mark absent branches. Returns
  // mu and lower-bounded sigma as [L, C].
  DistributionParams param_predict(const Tensor& phi_rows, const Tensor& psi_g, const Tensor& side_rows) const;

  ForwardResult forward(const Tensor& x, QuantizeMode mode, RngState* rng) const;

  // Pieces of the per-position path used by SerialPredictor.
  std::vector<double> context_at(const Tensor& y_hat, std::size_t h, std::size_t w) const;
  Tensor global_context_row(const Tensor& phi_row, const Tensor& phi_prefix) const;

  const GaussianConditional& gaussian() const { return gaussian_; }
  const FactorizedPrior& global_prior() const { return global_prior_; }
  const FactorizedPrior& side_prior() const { return side_prior_; }

 private:
  ModelConfig config_;
  VariantTraits traits_;
  GaussianConditional gaussian_;

  std::vector<Conv2dLayer> analysis_convs_;
  std::vector<GdnLayer> analysis_gdn_;
  std::vector<ConvTranspose2dLayer> synthesis_convs_;
  std::vector<GdnLayer> synthesis_gdn_;

  Tensor global_tokens_;  // u [N, C]
  CrossAttentionBlock global_attention_;
  MlpResidualBlock global_mlp1_;
  Linear global_mlp2_;
  Linear global_decoder_;
  FactorizedPrior global_prior_;

  std::vector<Conv2dLayer> local_encoder_;
  std::vector<Conv2dLayer> local_decoder_;
  std::vector<Conv2dLayer> spatial_encoder_;
  std::vector<ConvTranspose2dLayer> spatial_decoder_up_;
  Conv2dLayer spatial_decoder_out_;
  FactorizedPrior side_prior_;

  MaskedConvLayer context_model_;
  MaskedSelfAttentionBlock global_context_;
  MlpResidualBlock global_context_mlp_;
  CrossAttentionBlock param_attention_;
  MlpResidualBlock param_mlp_;
  std::vector<Conv2dLayer> param_convs_;
};

// Reshapes [H, W, D] to rows [H*W, D] and back.
Tensor to_rows(const Tensor& map);
Tensor from_rows(const Tensor& rows, std::size_t h, std::size_t w);

// Per-position evaluation of the entropy parameters in raster order, shared
// by the encoder and the decoder so both build identical coding tables.
class SerialPredictor {
 public:
  // psi_g and side may be undefined when the variant lacks them. `side` is
  // [H, W, 2C].
  SerialPredictor(const InformerModel& model, Tensor psi_g, Tensor side, std::size_t h, std::size_t w);

  // mu and sigma (length C) at (h, w). Reads only raster-earlier entries of
  // y_hat. Positions must be visited in raster order.
  std::pair<std::vector<double>, std::vector<double>> predict(const Tensor& y_hat, std::size_t h, std::size_t w);

 private:
  const InformerModel& model_;
  Tensor psi_g_;
  Tensor side_;
  std::size_t h_, w_;
  std::vector<double> phi_history_;  // raster-earlier phi rows for global context
  std::size_t next_index_ = 0;
};

}  // namespace informer
