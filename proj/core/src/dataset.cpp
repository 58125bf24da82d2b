// SPDX-License-Identifier: Apache-2.0
#include "informer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "informer/config.hpp"
#include "informer/error.hpp"
#include "informer/ops.hpp"

namespace informer {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

void fill_gradient(Image& img, RngState& rng, double amplitude) {
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = rng.uniform(40.0, 215.0);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double gx = std::cos(angle) * amplitude / static_cast<double>(img.width);
    const double gy = std::sin(angle) * amplitude / static_cast<double>(img.height);
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        const double dx = static_cast<double>(x) - img.width / 2.0;
        const double dy = static_cast<double>(y) - img.height / 2.0;
        img.at(y, x, c) = to_byte(base + gx * dx + gy * dy);
      }
    }
  }
}

Image repeated_motifs(const SyntheticDatasetSpec& spec, RngState& rng) {
  Image img(spec.height, spec.width);
  fill_gradient(img, rng, 60.0);
  const std::size_t m = spec.motif_size;
  std::vector<std::vector<std::uint8_t>> motifs(spec.motif_count, std::vector<std::uint8_t>(m * m * 3));
  for (auto& motif : motifs) {
    // Blocky two-color patterns stay compressible but clearly structured.
    std::uint8_t colors[2][3];
    for (auto& col : colors) {
      for (auto& v : col) v = static_cast<std::uint8_t>(rng.index(256));
    }
    const std::size_t cell = std::max<std::size_t>(1, m / 4);
    for (std::size_t y = 0; y < m; ++y) {
      for (std::size_t x = 0; x < m; ++x) {
        const bool on = ((y / cell) * 7 + (x / cell) * 3 + (y / cell) * (x / cell)) % 2 == 0;
        for (std::size_t c = 0; c < 3; ++c) motif[(y * m + x) * 3 + c] = colors[on ? 1 : 0][c];
      }
    }
  }
  // Roughly a quarter of the image area gets covered by motif copies.
  const std::size_t copies = std::max<std::size_t>(1, spec.height * spec.width / (4 * m * m));
  for (std::size_t n = 0; n < copies; ++n) {
    const auto& motif = motifs[rng.index(motifs.size())];
    const std::size_t oy = rng.index(spec.height - m + 1);
    const std::size_t ox = rng.index(spec.width - m + 1);
    for (std::size_t y = 0; y < m; ++y) {
      for (std::size_t x = 0; x < m; ++x) {
        for (std::size_t c = 0; c < 3; ++c) img.at(oy + y, ox + x, c) = motif[(y * m + x) * 3 + c];
      }
    }
  }
  return img;
}

Image gaussian_noise(const SyntheticDatasetSpec& spec, RngState& rng) {
  Image img(spec.height, spec.width);
  for (auto& v : img.rgb) v = to_byte(rng.normal(128.0, 40.0));
  return img;
}

Image gradient_fields(const SyntheticDatasetSpec& spec, RngState& rng) {
  Image img(spec.height, spec.width);
  fill_gradient(img, rng, 160.0);
  return img;
}

}  // namespace

std::string_view generator_name(Generator g) {
  switch (g) {
    case Generator::kRepeatedMotifs:
      return "repeated_motifs";
    case Generator::kGaussianNoise:
      return "gaussian_noise";
    case Generator::kGradientFields:
      return "gradient_fields";
  }
  return "unknown";
}

Generator parse_generator(std::string_view name) {
  for (Generator g : {Generator::kRepeatedMotifs, Generator::kGaussianNoise, Generator::kGradientFields}) {
    if (generator_name(g) == name) return g;
  }
  throw ConfigError("unknown generator '" + std::string(name) + "'");
}

SyntheticDatasetSpec SyntheticDatasetSpec::parse(std::string_view text) {
  SyntheticDatasetSpec spec;
  for (const auto& [key, value] : parse_key_values(text, ',')) {
    if (key == "generator") {
      spec.generator = parse_generator(value);
    } else if (key == "height") {
      spec.height = parse_size(key, value);
    } else if (key == "width") {
      spec.width = parse_size(key, value);
    } else if (key == "count") {
      spec.count = parse_size(key, value);
    } else if (key == "motif_count") {
      spec.motif_count = parse_size(key, value);
    } else if (key == "motif_size") {
      spec.motif_size = parse_size(key, value);
    } else if (key == "seed") {
      spec.seed = parse_u64(key, value);
    } else {
      throw ConfigError("unknown dataset key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string SyntheticDatasetSpec::to_string() const {
  std::ostringstream s;
  s << "generator=" << generator_name(generator) << ",height=" << height << ",width=" << width << ",count=" << count
    << ",motif_count=" << motif_count << ",motif_size=" << motif_size << ",seed=" << seed;
  return s.str();
}

void SyntheticDatasetSpec::validate() const {
  if (height == 0 || width == 0) throw ConfigError("dataset images must be non-empty");
  if (count == 0) throw ConfigError("dataset is empty");
  if (generator == Generator::kRepeatedMotifs) {
    if (motif_count == 0 || motif_size == 0) throw ConfigError("motif count and size must be positive");
    if (motif_size > height || motif_size > width) throw ConfigError("motif larger than the image");
  }
}

Image generate_image(const SyntheticDatasetSpec& spec, std::size_t index) {
  spec.validate();
  RngState rng(splitmix64(spec.seed ^ splitmix64(index)));
  switch (spec.generator) {
    case Generator::kRepeatedMotifs:
      return repeated_motifs(spec, rng);
    case Generator::kGaussianNoise:
      return gaussian_noise(spec, rng);
    case Generator::kGradientFields:
      return gradient_fields(spec, rng);
  }
  throw ConfigError("unknown generator");
}

std::vector<Image> generate_dataset(const SyntheticDatasetSpec& spec) {
  std::vector<Image> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(generate_image(spec, i));
  return out;
}

std::vector<std::filesystem::path> list_ppm_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Image> load_directory(const std::filesystem::path& dir) {
  std::vector<Image> out;
  for (const auto& p : list_ppm_files(dir)) out.push_back(read_ppm(p));
  if (out.empty()) throw ConfigError("no .ppm images in " + dir.string());
  return out;
}

Tensor random_crop(const Image& img, std::size_t patch, RngState& rng) {
  if (img.height < patch || img.width < patch) throw ShapeError("image smaller than the training patch");
  const std::size_t oy = rng.index(img.height - patch + 1);
  const std::size_t ox = rng.index(img.width - patch + 1);
  std::vector<double> v(patch * patch * 3);
  for (std::size_t y = 0; y < patch; ++y) {
    for (std::size_t x = 0; x < patch; ++x) {
      for (std::size_t c = 0; c < 3; ++c) v[(y * patch + x) * 3 + c] = img.at(oy + y, ox + x, c) / 255.0;
    }
  }
  return Tensor({patch, patch, 3}, std::move(v));
}

}  // namespace informer
