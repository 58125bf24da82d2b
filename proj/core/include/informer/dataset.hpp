// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic image generators and the training image pool.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "informer/image.hpp"
#include "informer/tensor.hpp"

namespace informer {

enum class Generator { kRepeatedMotifs, kGaussianNoise, kGradientFields };

std::string_view generator_name(Generator g);
Generator parse_generator(std::string_view name);

struct SyntheticDatasetSpec {
  Generator generator = Generator::kRepeatedMotifs;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t count = 16;        // images in the pool
  std::size_t motif_count = 3;   // distinct motifs (repeated_motifs)
  std::size_t motif_size = 8;
  std::uint64_t seed = 0;

  // "generator=repeated_motifs,height=64,..."; unknown keys are ConfigErrors.
  static SyntheticDatasetSpec parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
};

// Image `index` of the dataset; depends only on (spec, index).
Image generate_image(const SyntheticDatasetSpec& spec, std::size_t index);
std::vector<Image> generate_dataset(const SyntheticDatasetSpec& spec);

// All *.ppm files in a directory, sorted by file name.
std::vector<std::filesystem::path> list_ppm_files(const std::filesystem::path& dir);
std::vector<Image> load_directory(const std::filesystem::path& dir);

// Random patch x patch crop with its origin drawn from `rng`.
Tensor random_crop(const Image& img, std::size_t patch, RngState& rng);

}  // namespace informer
