// SPDX-License-Identifier: Apache-2.0
#include "informer/model.hpp"

#include <array>
#include <bit>
#include <cmath>

#include "informer/error.hpp"

namespace informer {

namespace {

struct VariantEntry {
  Variant variant;
  std::string_view name;
};

constexpr std::array<VariantEntry, 8> kVariants{{
    {Variant::kInformer, "informer"},
    {Variant::kContextHyperprior, "context_hyperprior"},
    {Variant::kHyperpriorOnly, "hyperprior_only"},
    {Variant::kContextOnly, "context_only"},
    {Variant::kGlobalContext, "global_context"},
    {Variant::kInformerWoLocal, "informer_wo_local"},
    {Variant::kInformerWoGlobal, "informer_wo_global"},
    {Variant::kInformerLocalQuery, "informer_local_query"},
}};

Tensor apply_chain(const std::vector<Conv2dLayer>& convs, Tensor x) {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    x = convs[i].forward(x);
    if (i + 1 < convs.size()) x = leaky_relu(x);
  }
  return x;
}

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 1099511628211ull;
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      const auto b = static_cast<unsigned char>(v >> (8 * i));
      bytes(&b, 1);
    }
  }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& e : kVariants) {
    if (e.variant == v) return e.name;
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& e : kVariants) {
    if (e.name == name) return e.variant;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::optional<Variant> variant_from_id(std::uint8_t id) {
  for (const auto& e : kVariants) {
    if (static_cast<std::uint8_t>(e.variant) == id) return e.variant;
  }
  return std::nullopt;
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all = [] {
    std::vector<Variant> v;
    for (const auto& e : kVariants) v.push_back(e.variant);
    return v;
  }();
  return all;
}

VariantTraits variant_traits(Variant v) {
  VariantTraits t;
  switch (v) {
    case Variant::kInformer:
      t.context = t.global_hyper = t.local_hyper = t.attention_head = true;
      break;
    case Variant::kContextHyperprior:
      t.context = t.spatial_hyper = true;
      break;
    case Variant::kHyperpriorOnly:
      t.spatial_hyper = true;
      break;
    case Variant::kContextOnly:
      t.context = t.attention_head = true;
      break;
    case Variant::kGlobalContext:
      t.context = t.spatial_hyper = t.global_context = t.attention_head = true;
      break;
    case Variant::kInformerWoLocal:
      t.context = t.global_hyper = t.attention_head = true;
      break;
    case Variant::kInformerWoGlobal:
      t.context = t.local_hyper = t.attention_head = true;
      break;
    case Variant::kInformerLocalQuery:
      t.context = t.global_hyper = t.local_hyper = t.attention_head = t.local_query = true;
      break;
  }
  return t;
}

void ModelConfig::validate() const {
  const std::size_t c = latent_channels;
  if (c == 0 || c % 16 != 0) throw ConfigError("latent channels must be a positive multiple of 16");
  if (global_tokens == 0 || c % global_tokens != 0) throw ConfigError("latent channels must be divisible by N");
  if (num_heads == 0 || c % num_heads != 0) throw ConfigError("latent channels must be divisible by num_heads");
  if (transform_channels == 0) throw ConfigError("transform channels must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and non-negative");
}

double ForwardResult::total_bits() const {
  double bits = rate_y_bits.item();
  if (rate_zl_bits.defined()) bits += rate_zl_bits.item();
  if (rate_zg_bits.defined()) bits += rate_zg_bits.item();
  return bits;
}

Tensor to_rows(const Tensor& map) {
  if (map.rank() != 3) throw ShapeError("to_rows expects [H, W, D]");
  return reshape(map, {map.dim(0) * map.dim(1), map.dim(2)});
}

Tensor from_rows(const Tensor& rows, std::size_t h, std::size_t w) {
  if (rows.rank() != 2 || rows.dim(0) != h * w) throw ShapeError("from_rows row count mismatch");
  return reshape(rows, {h, w, rows.dim(1)});
}

InformerModel::InformerModel(const ModelConfig& config) : config_(config), traits_(variant_traits(config.variant)) {
  config_.validate();
  RngState rng(config_.seed);
  const std::size_t c = config_.latent_channels;
  const std::size_t t = config_.transform_channels;
  const std::size_t n = config_.global_tokens;
  const std::size_t heads = config_.num_heads;

  const std::size_t analysis_in[4] = {3, t, t, t};
  const std::size_t analysis_out[4] = {t, t, t, c};
  for (int i = 0; i < 4; ++i) {
    analysis_convs_.emplace_back(analysis_in[i], analysis_out[i], 5, 2, 2, rng);
    if (i < 3) analysis_gdn_.emplace_back(t, false);
  }
  const std::size_t synthesis_in[4] = {c, t, t, t};
  const std::size_t synthesis_out[4] = {t, t, t, 3};
  for (int i = 0; i < 4; ++i) {
    synthesis_convs_.emplace_back(synthesis_in[i], synthesis_out[i], 5, 2, 2, 1, rng);
    if (i < 3) synthesis_gdn_.emplace_back(t, true);
  }

  if (traits_.global_hyper) {
    std::vector<double> u(n * c);
    for (double& v : u) v = rng.normal(0.0, 1.0);
    global_tokens_ = Tensor::parameter({n, c}, std::move(u));
    global_attention_ = CrossAttentionBlock(c, heads, rng);
    global_mlp1_ = MlpResidualBlock(c, 2 * c, rng);
    global_mlp2_ = Linear(c, c / n, rng);
    global_decoder_ = Linear(c / n, 2 * c, rng);
    global_prior_ = FactorizedPrior(c / n, rng);
  }
  if (traits_.local_hyper) {
    local_encoder_.emplace_back(c, c, 1, 1, 0, rng);
    local_encoder_.emplace_back(c, c / 2, 1, 1, 0, rng);
    local_encoder_.emplace_back(c / 2, c / 16, 1, 1, 0, rng);
    local_decoder_.emplace_back(c / 16, c / 2, 1, 1, 0, rng);
    local_decoder_.emplace_back(c / 2, c, 1, 1, 0, rng);
    local_decoder_.emplace_back(c, 2 * c, 1, 1, 0, rng);
    side_prior_ = FactorizedPrior(c / 16, rng);
  }
  if (traits_.spatial_hyper) {
    spatial_encoder_.emplace_back(c, c, 5, 1, 2, rng);
    spatial_encoder_.emplace_back(c, c, 5, 2, 2, rng);
    spatial_encoder_.emplace_back(c, c, 5, 2, 2, rng);
    spatial_decoder_up_.emplace_back(c, c, 5, 2, 2, 1, rng);
    spatial_decoder_up_.emplace_back(c, c, 5, 2, 2, 1, rng);
    spatial_decoder_out_ = Conv2dLayer(c, 2 * c, 5, 1, 2, rng);
    side_prior_ = FactorizedPrior(c, rng);
  }
  if (traits_.context) context_model_ = MaskedConvLayer(c, 2 * c, rng);
  if (traits_.global_context) {
    global_context_ = MaskedSelfAttentionBlock(2 * c, heads, rng);
    global_context_mlp_ = MlpResidualBlock(2 * c, 4 * c, rng);
  }

  std::size_t head_in = 0;
  if (traits_.attention_head) {
    if (traits_.global_hyper) param_attention_ = CrossAttentionBlock(2 * c, heads, rng);
    param_mlp_ = MlpResidualBlock(2 * c, 4 * c, rng);
    head_in = 2 * c + ((traits_.local_hyper || traits_.spatial_hyper) ? 2 * c : 0);
  } else {
    head_in = (traits_.context ? 2 * c : 0) + (traits_.spatial_hyper ? 2 * c : 0);
  }
  param_convs_.emplace_back(head_in, 2 * c, 1, 1, 0, rng);
  param_convs_.emplace_back(2 * c, 2 * c, 1, 1, 0, rng);
  param_convs_.emplace_back(2 * c, 2 * c, 1, 1, 0, rng);
  // Start the scale half of the head well above the lower bound.
  Tensor last_bias = param_convs_.back().bias();
  auto bias = last_bias.mutable_values();
  for (std::size_t i = c; i < 2 * c; ++i) bias[i] = 1.0;
}

ParameterList InformerModel::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < analysis_convs_.size(); ++i) {
    analysis_convs_[i].collect("analysis.conv" + std::to_string(i), out);
    if (i < analysis_gdn_.size()) analysis_gdn_[i].collect("analysis.gdn" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < synthesis_convs_.size(); ++i) {
    synthesis_convs_[i].collect("synthesis.deconv" + std::to_string(i), out);
    if (i < synthesis_gdn_.size()) synthesis_gdn_[i].collect("synthesis.igdn" + std::to_string(i), out);
  }
  if (traits_.global_hyper) {
    out.push_back({"global.tokens", global_tokens_});
    global_attention_.collect("global.attention", out);
    global_mlp1_.collect("global.mlp1", out);
    global_mlp2_.collect("global.mlp2", out);
    global_decoder_.collect("global.decoder", out);
    global_prior_.collect("global.prior", out);
  }
  if (traits_.local_hyper) {
    for (std::size_t i = 0; i < local_encoder_.size(); ++i) local_encoder_[i].collect("local.encoder" + std::to_string(i), out);
    for (std::size_t i = 0; i < local_decoder_.size(); ++i) local_decoder_[i].collect("local.decoder" + std::to_string(i), out);
    side_prior_.collect("local.prior", out);
  }
  if (traits_.spatial_hyper) {
    for (std::size_t i = 0; i < spatial_encoder_.size(); ++i) spatial_encoder_[i].collect("hyper.encoder" + std::to_string(i), out);
    for (std::size_t i = 0; i < spatial_decoder_up_.size(); ++i) spatial_decoder_up_[i].collect("hyper.decoder" + std::to_string(i), out);
    spatial_decoder_out_.collect("hyper.decoder_out", out);
    side_prior_.collect("hyper.prior", out);
  }
  if (traits_.context) context_model_.collect("context.masked_conv", out);
  if (traits_.global_context) {
    global_context_.collect("global_context", out);
    global_context_mlp_.collect("global_context.mlp", out);
  }
  if (traits_.attention_head) {
    if (traits_.global_hyper) param_attention_.collect("param.attention", out);
    param_mlp_.collect("param.mlp", out);
  }
  for (std::size_t i = 0; i < param_convs_.size(); ++i) param_convs_[i].collect("param.conv" + std::to_string(i), out);
  return out;
}

void InformerModel::project_constraints() {
  for (auto& g : analysis_gdn_) g.project();
  for (auto& g : synthesis_gdn_) g.project();
}

std::uint64_t InformerModel::hash() const {
  Fnv1a h;
  h.u64(static_cast<std::uint64_t>(config_.variant));
  h.u64(config_.latent_channels);
  h.u64(config_.global_tokens);
  h.u64(config_.num_heads);
  h.u64(config_.transform_channels);
  for (const auto& p : parameters()) {
    h.bytes(p.name.data(), p.name.size());
    for (auto d : p.tensor.shape()) h.u64(d);
    for (double v : p.tensor.values()) h.u64(std::bit_cast<std::uint64_t>(v));
  }
  return h.value();
}

Tensor InformerModel::analysis(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != 3) throw ShapeError("analysis expects an [H, W, 3] image");
  if (x.dim(0) % kDownsample != 0 || x.dim(1) % kDownsample != 0) {
    throw ShapeError("image dimensions must be multiples of 16, got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < analysis_convs_.size(); ++i) {
    h = analysis_convs_[i].forward(h);
    if (i < analysis_gdn_.size()) h = analysis_gdn_[i].forward(h);
  }
  return h;
}

Tensor InformerModel::synthesis(const Tensor& y_hat) const {
  if (y_hat.rank() != 3 || y_hat.dim(2) != channels()) throw ShapeError("synthesis expects [H, W, C] latents");
  Tensor h = y_hat;
  for (std::size_t i = 0; i < synthesis_convs_.size(); ++i) {
    h = synthesis_convs_[i].forward(h);
    if (i < synthesis_gdn_.size()) h = synthesis_gdn_[i].forward(h);
  }
  return h;
}

Tensor InformerModel::global_hyper_encode(const Tensor& y) const {
  if (!traits_.global_hyper) throw ConfigError("variant has no global hyperprior");
  const Tensor u_prime = global_attention_.forward(global_tokens_, to_rows(y));
  return global_mlp2_.forward(global_mlp1_.forward(u_prime));
}

Tensor InformerModel::global_hyper_decode(const Tensor& z_g_hat) const {
  if (!traits_.global_hyper) throw ConfigError("variant has no global hyperprior");
  return global_decoder_.forward(z_g_hat);
}

Tensor InformerModel::local_hyper_encode(const Tensor& y) const {
  if (!traits_.local_hyper) throw ConfigError("variant has no local hyperprior");
  return apply_chain(local_encoder_, y);
}

Tensor InformerModel::local_hyper_decode(const Tensor& z_l_hat) const {
  if (!traits_.local_hyper) throw ConfigError("variant has no local hyperprior");
  return apply_chain(local_decoder_, z_l_hat);
}

Tensor InformerModel::spatial_hyper_encode(const Tensor& y) const {
  if (!traits_.spatial_hyper) throw ConfigError("variant has no spatial hyperprior");
  return apply_chain(spatial_encoder_, y);
}

Tensor InformerModel::spatial_hyper_decode(const Tensor& z_hat, std::size_t h, std::size_t w) const {
  if (!traits_.spatial_hyper) throw ConfigError("variant has no spatial hyperprior");
  Tensor up = z_hat;
  for (const auto& layer : spatial_decoder_up_) up = leaky_relu(layer.forward(up));
  Tensor out = spatial_decoder_out_.forward(up);
  if (out.dim(0) < h || out.dim(1) < w) throw ShapeError("hyperprior decoder output smaller than latent");
  if (out.dim(0) != h) out = slice(out, 0, 0, h);
  if (out.dim(1) != w) out = slice(out, 1, 0, w);
  return out;
}

Tensor InformerModel::context(const Tensor& y_hat) const {
  if (!traits_.context) throw ConfigError("variant has no context model");
  return context_model_.forward(y_hat);
}

Tensor InformerModel::global_context_forward(const Tensor& phi_rows) const {
  if (!traits_.global_context) throw ConfigError("variant has no global context model");
  return global_context_mlp_.forward(global_context_.forward(phi_rows));
}

std::vector<double> InformerModel::context_at(const Tensor& y_hat, std::size_t h, std::size_t w) const {
  return context_model_.forward_at(y_hat, h, w);
}

Tensor InformerModel::global_context_row(const Tensor& phi_row, const Tensor& phi_prefix) const {
  return global_context_mlp_.forward(global_context_.forward_row(phi_row, phi_prefix));
}

DistributionParams InformerModel::param_predict(const Tensor& phi_rows, const Tensor& psi_g,
                                                const Tensor& side_rows) const {
  const std::size_t c = channels();
  Tensor features;
  if (traits_.attention_head) {
    const Tensor& query = traits_.local_query ? side_rows : phi_rows;
    const Tensor& other = traits_.local_query ? phi_rows : side_rows;
    if (!query.defined()) throw ShapeError("parameter model is missing its query stream");
    Tensor attended = query;
    if (psi_g.defined()) {
      if (!traits_.global_hyper) throw ConfigError("variant has no global branch");
      attended = param_attention_.forward(query, psi_g);
    }
    features = param_mlp_.forward(attended);
    if (other.defined()) {
      const Tensor parts[2] = {features, other};
      features = concat(parts, 1);
    }
  } else if (phi_rows.defined() && side_rows.defined()) {
    const Tensor parts[2] = {phi_rows, side_rows};
    features = concat(parts, 1);
  } else {
    features = phi_rows.defined() ? phi_rows : side_rows;
  }
  if (!features.defined()) throw ShapeError("parameter model received no inputs");
  const std::size_t rows = features.dim(0);
  Tensor out = apply_chain(param_convs_, reshape(features, {rows, 1, features.dim(1)}));
  out = reshape(out, {rows, 2 * c});
  return {slice(out, 1, 0, c), gaussian_.lower_bound_scale(slice(out, 1, c, c))};
}

ForwardResult InformerModel::forward(const Tensor& x, QuantizeMode mode, RngState* rng) const {
  ForwardResult r;
  r.pixels = x.dim(0) * x.dim(1);
  LatentState& lat = r.latents;
  lat.y = analysis(x);
  const std::size_t h = lat.y.dim(0);
  const std::size_t w = lat.y.dim(1);
  lat.y_hat = quantize(lat.y, mode, rng);

  Tensor psi_g;
  Tensor side;
  if (traits_.global_hyper) {
    lat.z_g = global_hyper_encode(lat.y);
    lat.z_g_hat = quantize(lat.z_g, mode, rng);
    r.rate_zg_bits = rate_bits_tensor(global_prior_.likelihood(lat.z_g_hat));
    psi_g = global_hyper_decode(lat.z_g_hat);
  }
  if (traits_.local_hyper) {
    lat.z_l = local_hyper_encode(lat.y);
    lat.z_l_hat = quantize(lat.z_l, mode, rng);
    r.rate_zl_bits = rate_bits_tensor(side_prior_.likelihood(lat.z_l_hat));
    side = to_rows(local_hyper_decode(lat.z_l_hat));
  } else if (traits_.spatial_hyper) {
    lat.z_l = spatial_hyper_encode(lat.y);
    lat.z_l_hat = quantize(lat.z_l, mode, rng);
    r.rate_zl_bits = rate_bits_tensor(side_prior_.likelihood(lat.z_l_hat));
    side = to_rows(spatial_hyper_decode(lat.z_l_hat, h, w));
  }

  Tensor phi;
  if (traits_.context) {
    phi = to_rows(context(lat.y_hat));
    if (traits_.global_context) phi = global_context_forward(phi);
  }
  const DistributionParams rows = param_predict(phi, psi_g, side);
  r.params = {from_rows(rows.mu, h, w), from_rows(rows.sigma, h, w)};
  r.rate_y_bits = rate_bits_tensor(gaussian_likelihood(lat.y_hat, r.params.mu, r.params.sigma));

  r.x_hat = synthesis(lat.y_hat);
  r.mse = mean(square(sub(r.x_hat, x)));

  Tensor rate = r.rate_y_bits;
  if (r.rate_zl_bits.defined()) rate = add(rate, r.rate_zl_bits);
  if (r.rate_zg_bits.defined()) rate = add(rate, r.rate_zg_bits);
  const Tensor bpp = scale(rate, 1.0 / static_cast<double>(r.pixels));
  r.loss = add(bpp, scale(r.mse, config_.lambda * 255.0 * 255.0));
  if (!std::isfinite(r.loss.item())) throw DomainError("non-finite loss");
  return r;
}

SerialPredictor::SerialPredictor(const InformerModel& model, Tensor psi_g, Tensor side, std::size_t h, std::size_t w)
    : model_(model), psi_g_(std::move(psi_g)), side_(std::move(side)), h_(h), w_(w) {
  if (side_.defined() && side_.shape() != Shape{h, w, 2 * model.channels()}) {
    throw ShapeError("side features must be [H, W, 2C]");
  }
}

std::pair<std::vector<double>, std::vector<double>> SerialPredictor::predict(const Tensor& y_hat, std::size_t h,
                                                                              std::size_t w) {
  NoGradGuard no_grad;
  const std::size_t c = model_.channels();
  const std::size_t index = h * w_ + w;
  if (h >= h_ || w >= w_) throw ShapeError("serial position outside latent");
  const auto& traits = model_.traits();
  if (traits.global_context && index != next_index_) {
    throw ShapeError("global context decoding must visit positions in raster order");
  }
  next_index_ = index + 1;

  Tensor phi_row;
  if (traits.context) {
    std::vector<double> phi = model_.context_at(y_hat, h, w);
    phi_row = Tensor({1, 2 * c}, phi);
    if (traits.global_context) {
      Tensor prefix;
      if (index > 0) prefix = Tensor({index, 2 * c}, phi_history_);
      const Tensor updated = model_.global_context_row(phi_row, prefix);
      phi_history_.insert(phi_history_.end(), phi.begin(), phi.end());
      phi_row = updated;
    }
  }
  Tensor side_row;
  if (side_.defined()) side_row = reshape(slice(reshape(side_, {h_ * w_, 2 * c}), 0, index, 1), {1, 2 * c});
  const DistributionParams p = model_.param_predict(phi_row, psi_g_, side_row);
  return {std::vector<double>(p.mu.values().begin(), p.mu.values().end()),
          std::vector<double>(p.sigma.values().begin(), p.sigma.values().end())};
}

}  // namespace informer
