// SPDX-License-Identifier: Apache-2.0
#include "informer/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "informer/error.hpp"
#include "informer/ops.hpp"

namespace informer {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok.push_back(static_cast<char>(bytes[pos++]));
  if (tok.empty()) throw FormatError("truncated PPM header");
  return tok;
}

std::size_t header_number(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  const std::string tok = header_token(bytes, pos);
  std::size_t value = 0;
  for (char c : tok) {
    if (c < '0' || c > '9') throw FormatError("bad PPM header field '" + tok + "'");
    value = value * 10 + static_cast<std::size_t>(c - '0');
    if (value > 1u << 20) throw FormatError("PPM dimension too large");
  }
  return value;
}

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (header_token(bytes, pos) != "P6") throw FormatError("not a binary PPM (P6) file");
  const std::size_t w = header_number(bytes, pos);
  const std::size_t h = header_number(bytes, pos);
  const std::size_t maxval = header_number(bytes, pos);
  if (w == 0 || h == 0) throw FormatError("PPM has zero size");
  if (maxval != 255) throw FormatError("only 8-bit PPM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("truncated PPM header");
  ++pos;
  Image img(h, w);
  if (bytes.size() - pos < img.rgb.size()) throw FormatError("truncated PPM pixel data");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.rgb.size(), img.rgb.begin());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_ppm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_ppm(img)); }

Tensor image_to_tensor(const Image& img) {
  std::vector<double> v(img.rgb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.rgb[i] / 255.0;
  return Tensor({img.height, img.width, 3}, std::move(v));
}

Image tensor_to_image(const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) != 3) throw ShapeError("expected an [H, W, 3] tensor");
  Image img(x.dim(0), x.dim(1));
  const auto v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double c = std::isnan(v[i]) ? 0.0 : std::clamp(v[i], 0.0, 1.0);
    img.rgb[i] = static_cast<std::uint8_t>(std::lround(c * 255.0));
  }
  return img;
}

std::size_t round_up(std::size_t n, std::size_t multiple) { return (n + multiple - 1) / multiple * multiple; }

Tensor pad_edge(const Tensor& x, std::size_t height, std::size_t width) {
  if (x.rank() != 3 || height < x.dim(0) || width < x.dim(1)) throw ShapeError("pad_edge cannot shrink");
  const std::size_t h0 = x.dim(0), w0 = x.dim(1), c = x.dim(2);
  std::vector<double> out(height * width * c);
  const auto v = x.values();
  for (std::size_t i = 0; i < height; ++i) {
    const std::size_t si = std::min(i, h0 - 1);
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t sj = std::min(j, w0 - 1);
      for (std::size_t k = 0; k < c; ++k) out[(i * width + j) * c + k] = v[(si * w0 + sj) * c + k];
    }
  }
  return Tensor({height, width, c}, std::move(out));
}

Tensor crop(const Tensor& x, std::size_t height, std::size_t width) {
  Tensor out = x;
  if (out.dim(0) != height) out = slice(out, 0, 0, height);
  if (out.dim(1) != width) out = slice(out, 1, 0, width);
  return out;
}

double mse_255(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("image sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.rgb.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse_255(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

}  // namespace informer
