// SPDX-License-Identifier: Apache-2.0
//
// Closed-form FLOP counts of the entropy models (analysis and synthesis
// transforms excluded). One multiply-accumulate counts as 2 FLOPs;
// activations, normalizations, softmax and biases are not counted.
//
// Latent sizes are taken as the real values H0/16 and W0/16 so that counts
// scale exactly with area for any resolution.
#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "informer/model.hpp"

namespace informer {

// Profiled entropy models: every Variant name plus "global_reference", an
// analytic stand-in for context + hyperprior + a global reference module
// that compares each position with all earlier ones.
inline constexpr std::string_view kGlobalReference = "global_reference";
std::vector<std::string> profile_models();

struct FlopsEntry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::string model;
  std::vector<std::pair<std::string, double>> submodules;  // positive counts only

  double total() const;
  double pixels() const { return static_cast<double>(height) * static_cast<double>(width); }
};

// 2 * k^2 * cin * cout * out_positions
double conv_flops(std::size_t k, double cin, double cout, double out_positions);

FlopsEntry count_flops(const ModelConfig& config, std::size_t height, std::size_t width, std::string_view model);

// Least-squares slope of log(total) against log(pixels). Requires at least
// four distinct resolutions spanning a 16x pixel range (DomainError).
double fit_scaling_exponent(const std::vector<FlopsEntry>& entries);

struct FlopsReport {
  std::vector<FlopsEntry> entries;
  std::vector<std::pair<std::string, double>> exponents;  // per model, when fittable

  std::string csv() const;
  std::string summary() const;
};

FlopsReport profile(const ModelConfig& config, const std::vector<std::pair<std::size_t, std::size_t>>& resolutions,
                    const std::vector<std::string>& models);

// "320x240,1920x1080" as (width, height) pairs.
std::vector<std::pair<std::size_t, std::size_t>> parse_resolutions(std::string_view text);

// Resolutions of the complexity comparison: 320x240 up to 4096x2304.
const std::vector<std::pair<std::size_t, std::size_t>>& reference_resolutions();

}  // namespace informer
