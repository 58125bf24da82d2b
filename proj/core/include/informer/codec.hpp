// SPDX-License-Identifier: Apache-2.0
//
// Image <-> bitstream. Both directions evaluate the entropy parameters of
// y_hat with the same per-position SerialPredictor, so the coding tables
// agree by construction.
#pragma once

#include "informer/bitstream.hpp"
#include "informer/image.hpp"
#include "informer/model.hpp"

namespace informer {

struct QuantizedLatents {
  Tensor y_hat;    // [H, W, C]
  Tensor z_g_hat;  // [N, C/N], undefined when absent
  Tensor z_l_hat;  // local or spatial hyperprior latent, undefined when absent
};

struct EncodeResult {
  Bitstream bitstream;
  QuantizedLatents latents;
  Image reconstruction;  // what the decoder will produce
};

struct DecodeResult {
  Image image;
  QuantizedLatents latents;
};

// Largest latent magnitude representable in the header's alphabet bounds.
inline constexpr std::int32_t kMaxLatentMagnitude = (1 << 15) - 2;

// Throws DomainError on alphabet overflow and ShapeError on images too
// large for the header.
EncodeResult encode_image(const InformerModel& model, const Image& image);
// Throws FormatError on variant or model-hash mismatch and on truncated or
// corrupt payloads.
DecodeResult decode_image(const InformerModel& model, const Bitstream& b);

// Eval-mode rate estimate (rounded latents, continuous likelihoods) of the
// edge-padded image, in bits.
struct RateEstimate {
  double y_bits = 0.0;
  double zl_bits = 0.0;
  double zg_bits = 0.0;
  double total() const { return y_bits + zl_bits + zg_bits; }
};
RateEstimate estimate_rate(const InformerModel& model, const Image& image);

// Synthesis of y_hat cropped to the original size and quantized to 8 bits.
Image reconstruct(const InformerModel& model, const Tensor& y_hat, std::size_t height, std::size_t width);

}  // namespace informer
