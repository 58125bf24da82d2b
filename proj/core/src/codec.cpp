// SPDX-License-Identifier: Apache-2.0
#include "informer/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "informer/error.hpp"
#include "informer/ops.hpp"
#include "informer/range_coder.hpp"

namespace informer {

namespace {

Tensor padded_input(const Image& image) {
  if (image.height == 0 || image.width == 0) throw ShapeError("empty image");
  const std::size_t ph = round_up(image.height, InformerModel::kDownsample);
  const std::size_t pw = round_up(image.width, InformerModel::kDownsample);
  if (ph > std::numeric_limits<std::uint16_t>::max() || pw > std::numeric_limits<std::uint16_t>::max()) {
    throw ShapeError("image too large for the bitstream header");
  }
  return pad_edge(image_to_tensor(image), ph, pw);
}

std::int32_t to_symbol(double v) {
  if (!(std::abs(v) <= kMaxLatentMagnitude)) {
    throw DomainError("latent magnitude exceeds the coding alphabet");
  }
  return static_cast<std::int32_t>(v);
}

SymbolBounds bounds_of(const Tensor& t) {
  if (!t.defined()) return {};
  const auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
  return {static_cast<std::int16_t>(to_symbol(*lo) - 1), static_cast<std::int16_t>(to_symbol(*hi) + 1)};
}

// Tables for a factorized prior, one per channel.
std::vector<CmfTable> prior_tables(const FactorizedPrior& prior, SymbolBounds b) {
  std::vector<CmfTable> tables;
  tables.reserve(prior.channels());
  for (std::size_t c = 0; c < prior.channels(); ++c) tables.push_back(prior.build_cmf(c, b.min, b.max));
  return tables;
}

std::vector<std::uint8_t> encode_factorized(const FactorizedPrior& prior, const Tensor& z, SymbolBounds b) {
  const auto tables = prior_tables(prior, b);
  RangeEncoder enc;
  const auto v = z.values();
  for (std::size_t i = 0; i < v.size(); ++i) enc.encode(tables[i % tables.size()], to_symbol(v[i]));
  return enc.finish();
}

Tensor decode_factorized(const FactorizedPrior& prior, const std::vector<std::uint8_t>& bytes, SymbolBounds b,
                         Shape shape) {
  const auto tables = prior_tables(prior, b);
  RangeDecoder dec(bytes);
  std::vector<double> v(shape_numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = dec.decode(tables[i % tables.size()]);
  if (dec.overrun() != 0) throw FormatError("hyperprior segment truncated");
  return Tensor(std::move(shape), std::move(v));
}

struct SideInfo {
  Tensor psi_g;
  Tensor side;  // [H, W, 2C]
};

SideInfo side_info(const InformerModel& model, const QuantizedLatents& q, std::size_t h, std::size_t w) {
  SideInfo s;
  const auto& traits = model.traits();
  if (traits.global_hyper) s.psi_g = model.global_hyper_decode(q.z_g_hat);
  if (traits.local_hyper) {
    s.side = model.local_hyper_decode(q.z_l_hat);
  } else if (traits.spatial_hyper) {
    s.side = model.spatial_hyper_decode(q.z_l_hat, h, w);
  }
  return s;
}

Shape side_latent_shape(const InformerModel& model, std::size_t h, std::size_t w) {
  const std::size_t c = model.channels();
  if (model.traits().local_hyper) return {h, w, c / 16};
  return {(h + 3) / 4, (w + 3) / 4, c};
}

const FactorizedPrior& side_prior(const InformerModel& model) { return model.side_prior(); }

}  // namespace

Image reconstruct(const InformerModel& model, const Tensor& y_hat, std::size_t height, std::size_t width) {
  NoGradGuard no_grad;
  return tensor_to_image(crop(model.synthesis(y_hat), height, width));
}

EncodeResult encode_image(const InformerModel& model, const Image& image) {
  NoGradGuard no_grad;
  const Tensor x = padded_input(image);
  const auto& traits = model.traits();

  EncodeResult r;
  Bitstream& b = r.bitstream;
  b.variant = static_cast<std::uint8_t>(model.config().variant);
  b.model_hash = model.hash();
  b.height = static_cast<std::uint16_t>(image.height);
  b.width = static_cast<std::uint16_t>(image.width);
  b.padded_height = static_cast<std::uint16_t>(x.dim(0));
  b.padded_width = static_cast<std::uint16_t>(x.dim(1));

  const Tensor y = model.analysis(x);
  const std::size_t h = y.dim(0), w = y.dim(1), c = y.dim(2);
  QuantizedLatents& q = r.latents;
  q.y_hat = quantize(y, QuantizeMode::kEvalRound);
  if (traits.global_hyper) {
    q.z_g_hat = quantize(model.global_hyper_encode(y), QuantizeMode::kEvalRound);
    b.bounds[Bitstream::kGlobal] = bounds_of(q.z_g_hat);
    b.segments[Bitstream::kGlobal] = encode_factorized(model.global_prior(), q.z_g_hat, b.bounds[Bitstream::kGlobal]);
  }
  if (traits.local_hyper || traits.spatial_hyper) {
    const Tensor z = traits.local_hyper ? model.local_hyper_encode(y) : model.spatial_hyper_encode(y);
    q.z_l_hat = quantize(z, QuantizeMode::kEvalRound);
    b.bounds[Bitstream::kLocal] = bounds_of(q.z_l_hat);
    b.segments[Bitstream::kLocal] = encode_factorized(side_prior(model), q.z_l_hat, b.bounds[Bitstream::kLocal]);
  }

  const SymbolBounds yb = bounds_of(q.y_hat);
  b.bounds[Bitstream::kLatent] = yb;
  const SideInfo s = side_info(model, q, h, w);
  SerialPredictor predictor(model, s.psi_g, s.side, h, w);
  // The predictor sees the same progressively filled buffer as the decoder.
  Tensor buffer = Tensor::zeros({h, w, c});
  auto buf = buffer.mutable_values();
  const auto src = q.y_hat.values();
  RangeEncoder enc;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const auto [mu, sigma] = predictor.predict(buffer, i, j);
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t idx = (i * w + j) * c + k;
        enc.encode(model.gaussian().build_cmf(mu[k], sigma[k], yb.min, yb.max), to_symbol(src[idx]));
        buf[idx] = src[idx];
      }
    }
  }
  b.segments[Bitstream::kLatent] = enc.finish();
  r.reconstruction = reconstruct(model, buffer, image.height, image.width);
  return r;
}

DecodeResult decode_image(const InformerModel& model, const Bitstream& b) {
  NoGradGuard no_grad;
  if (b.variant != static_cast<std::uint8_t>(model.config().variant)) {
    throw FormatError("bitstream variant id " + std::to_string(b.variant) + " does not match the model");
  }
  if (b.model_hash != model.hash()) throw FormatError("bitstream was produced by a different model");
  const std::size_t d = InformerModel::kDownsample;
  if (b.height == 0 || b.width == 0 || b.padded_height % d != 0 || b.padded_width % d != 0 ||
      b.padded_height != round_up(b.height, d) || b.padded_width != round_up(b.width, d)) {
    throw FormatError("inconsistent image dimensions in header");
  }
  for (const auto& bound : b.bounds) {
    if (bound.min > bound.max) throw FormatError("inconsistent alphabet bounds in header");
  }
  const auto& traits = model.traits();
  const std::size_t h = b.padded_height / d, w = b.padded_width / d, c = model.channels();

  DecodeResult r;
  QuantizedLatents& q = r.latents;
  if (traits.global_hyper) {
    const std::size_t n = model.config().global_tokens;
    q.z_g_hat = decode_factorized(model.global_prior(), b.segments[Bitstream::kGlobal], b.bounds[Bitstream::kGlobal],
                                  {n, c / n});
  }
  if (traits.local_hyper || traits.spatial_hyper) {
    q.z_l_hat = decode_factorized(side_prior(model), b.segments[Bitstream::kLocal], b.bounds[Bitstream::kLocal],
                                  side_latent_shape(model, h, w));
  }

  const SymbolBounds yb = b.bounds[Bitstream::kLatent];
  const SideInfo s = side_info(model, q, h, w);
  SerialPredictor predictor(model, s.psi_g, s.side, h, w);
  Tensor buffer = Tensor::zeros({h, w, c});
  auto buf = buffer.mutable_values();
  RangeDecoder dec(b.segments[Bitstream::kLatent]);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const auto [mu, sigma] = predictor.predict(buffer, i, j);
      for (std::size_t k = 0; k < c; ++k) {
        buf[(i * w + j) * c + k] = dec.decode(model.gaussian().build_cmf(mu[k], sigma[k], yb.min, yb.max));
      }
    }
  }
  if (dec.overrun() != 0) throw FormatError("latent segment truncated");
  q.y_hat = buffer;
  r.image = reconstruct(model, buffer, b.height, b.width);
  return r;
}

RateEstimate estimate_rate(const InformerModel& model, const Image& image) {
  NoGradGuard no_grad;
  const ForwardResult f = model.forward(padded_input(image), QuantizeMode::kEvalRound, nullptr);
  RateEstimate e;
  e.y_bits = f.rate_y_bits.item();
  if (f.rate_zl_bits.defined()) e.zl_bits = f.rate_zl_bits.item();
  if (f.rate_zg_bits.defined()) e.zg_bits = f.rate_zg_bits.item();
  return e;
}

}  // namespace informer
