// SPDX-License-Identifier: Apache-2.0
//
// 8-bit RGB images, binary PPM (P6) I/O and the conversions between images
// and [H, W, 3] tensors scaled to [0, 1].
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "informer/tensor.hpp"

namespace informer {

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, interleaved

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
  bool operator==(const Image&) const = default;
};

// Only maxval 255 is accepted. Throws FormatError on malformed input.
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);

Tensor image_to_tensor(const Image& img);
// Clamps to [0, 1] and rounds to the nearest gray level.
Image tensor_to_image(const Tensor& x);

std::size_t round_up(std::size_t n, std::size_t multiple);
// Replicates the last row and column out to the padded size.
Tensor pad_edge(const Tensor& x, std::size_t height, std::size_t width);
Tensor crop(const Tensor& x, std::size_t height, std::size_t width);

// Mean squared error on the 0..255 scale.
double mse_255(const Image& a, const Image& b);
// 10 log10(255^2 / mse); +infinity for identical images.
double psnr(const Image& a, const Image& b);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace informer
