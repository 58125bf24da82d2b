// SPDX-License-Identifier: Apache-2.0
#include "informer/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "informer/config.hpp"
#include "informer/error.hpp"

namespace informer {

namespace {

// Multi-head attention of `queries` rows over `keys` rows at width `dim`:
// Q, K, V and output projections plus the QK^T and AV products.
double attention_flops(double queries, double keys, double dim) {
  const double projections = 2.0 * dim * dim * (2.0 * queries + 2.0 * keys);
  const double products = 2.0 * queries * keys * dim * 2.0;
  return projections + products;
}

double mlp_flops(double rows, double dim, double hidden) { return 2.0 * rows * (dim * hidden + hidden * dim); }

}  // namespace

std::vector<std::string> profile_models() {
  std::vector<std::string> out;
  for (Variant v : all_variants()) out.emplace_back(variant_name(v));
  out.emplace_back(kGlobalReference);
  return out;
}

double FlopsEntry::total() const {
  double t = 0.0;
  for (const auto& [name, f] : submodules) t += f;
  return t;
}

double conv_flops(std::size_t k, double cin, double cout, double out_positions) {
  return 2.0 * static_cast<double>(k * k) * cin * cout * out_positions;
}

FlopsEntry count_flops(const ModelConfig& config, std::size_t height, std::size_t width, std::string_view model) {
  config.validate();
  if (height == 0 || width == 0) throw DomainError("resolution must be non-empty");
  const bool reference = model == kGlobalReference;
  const Variant variant = reference ? Variant::kContextHyperprior : parse_variant(model);
  const VariantTraits t = variant_traits(variant);

  const double c = static_cast<double>(config.latent_channels);
  const double n = static_cast<double>(config.global_tokens);
  const double l = static_cast<double>(height) * static_cast<double>(width) / 256.0;  // latent positions

  FlopsEntry e;
  e.height = height;
  e.width = width;
  e.model = std::string(model);
  auto add = [&](const char* name, double flops) {
    if (flops > 0.0) e.submodules.emplace_back(name, flops);
  };

  if (t.context) add("context", conv_flops(5, c, 2 * c, l));
  if (t.global_hyper) {
    double g = attention_flops(n, l, c);          // MHA(u, y, y)
    g += mlp_flops(n, c, 2 * c);                   // residual MLP
    g += 2.0 * n * c * (c / n);                    // C -> C/N
    g += 2.0 * n * (c / n) * 2 * c;                // decoder
    add("global_hyper", g);
  }
  if (t.local_hyper) {
    double g = 2.0 * l * (c * c + c * (c / 2) + (c / 2) * (c / 16));
    g += 2.0 * l * ((c / 16) * (c / 2) + (c / 2) * c + c * 2 * c);
    add("local_hyper", g);
  }
  if (t.spatial_hyper) {
    double g = conv_flops(5, c, c, l) + conv_flops(5, c, c, l / 4) + conv_flops(5, c, c, l / 16);
    // Transposed convolutions scatter every input position over k^2 taps.
    g += conv_flops(5, c, c, l / 16) + conv_flops(5, c, c, l / 4) + conv_flops(5, c, 2 * c, l);
    add("hyperprior", g);
  }
  if (t.global_context) add("global_context", attention_flops(l, l, 2 * c) + mlp_flops(l, 2 * c, 4 * c));
  if (reference) {
    // Similarity of every position with every earlier one, then aggregation.
    add(std::string(kGlobalReference).c_str(), 2.0 * l * l * 2 * c * 2.0);
  }

  double head_in = 0.0;
  double pm = 0.0;
  if (t.attention_head) {
    if (t.global_hyper) pm += attention_flops(l, n, 2 * c);
    pm += mlp_flops(l, 2 * c, 4 * c);
    head_in = 2 * c + ((t.local_hyper || t.spatial_hyper) ? 2 * c : 0);
  } else {
    head_in = (t.context ? 2 * c : 0) + (t.spatial_hyper ? 2 * c : 0);
  }
  pm += conv_flops(1, head_in, 2 * c, l) + 2.0 * conv_flops(1, 2 * c, 2 * c, l);
  add("parameter_model", pm);
  return e;
}

double fit_scaling_exponent(const std::vector<FlopsEntry>& entries) {
  std::set<double> distinct;
  for (const auto& e : entries) distinct.insert(e.pixels());
  if (distinct.size() < 4) throw DomainError("scaling fit needs at least four resolutions");
  if (*distinct.rbegin() < 16.0 * *distinct.begin()) throw DomainError("scaling fit needs a 16x pixel range");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(entries.size());
  for (const auto& e : entries) {
    const double x = std::log(e.pixels());
    const double y = std::log(e.total());
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

FlopsReport profile(const ModelConfig& config, const std::vector<std::pair<std::size_t, std::size_t>>& resolutions,
                    const std::vector<std::string>& models) {
  FlopsReport r;
  for (const auto& m : models) {
    std::vector<FlopsEntry> mine;
    for (const auto& [w, h] : resolutions) mine.push_back(count_flops(config, h, w, m));
    try {
      r.exponents.emplace_back(m, fit_scaling_exponent(mine));
    } catch (const DomainError&) {
      // Too few resolutions for a fit; counts are still reported.
    }
    r.entries.insert(r.entries.end(), mine.begin(), mine.end());
  }
  return r;
}

std::string FlopsReport::csv() const {
  std::ostringstream s;
  s << "# FLOPs of the entropy model only; 1 multiply-accumulate = 2 FLOPs; activations, norms, softmax excluded\n";
  s << "resolution,variant,submodule,flops\n";
  char buf[64];
  for (const auto& e : entries) {
    const std::string res = std::to_string(e.width) + "x" + std::to_string(e.height);
    for (const auto& [name, f] : e.submodules) {
      std::snprintf(buf, sizeof(buf), "%.6e", f);
      s << res << ',' << e.model << ',' << name << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.6e", e.total());
    s << res << ',' << e.model << ",total," << buf << '\n';
  }
  return s.str();
}

std::string FlopsReport::summary() const {
  std::ostringstream s;
  s << "Entropy-model GFLOPs (1 MAC = 2 FLOPs; activations, norms, softmax excluded)\n";
  std::vector<std::string> models;
  std::vector<std::string> resolutions;
  std::map<std::pair<std::string, std::string>, double> totals;
  for (const auto& e : entries) {
    const std::string res = std::to_string(e.width) + "x" + std::to_string(e.height);
    if (std::find(models.begin(), models.end(), e.model) == models.end()) models.push_back(e.model);
    if (std::find(resolutions.begin(), resolutions.end(), res) == resolutions.end()) resolutions.push_back(res);
    totals[{e.model, res}] = e.total();
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-22s", "variant");
  s << buf;
  for (const auto& r : resolutions) {
    std::snprintf(buf, sizeof(buf), " %11s", r.c_str());
    s << buf;
  }
  s << "    exponent\n";
  for (const auto& m : models) {
    std::snprintf(buf, sizeof(buf), "%-22s", m.c_str());
    s << buf;
    for (const auto& r : resolutions) {
      std::snprintf(buf, sizeof(buf), " %11.4f", totals[{m, r}] / 1e9);
      s << buf;
    }
    const auto it = std::find_if(exponents.begin(), exponents.end(), [&](const auto& p) { return p.first == m; });
    if (it != exponents.end()) {
      std::snprintf(buf, sizeof(buf), "    %.4f", it->second);
      s << buf;
    }
    s << '\n';
  }
  return s.str();
}

std::vector<std::pair<std::size_t, std::size_t>> parse_resolutions(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string item(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    item.erase(std::remove_if(item.begin(), item.end(), [](char ch) { return ch == ' '; }), item.end());
    if (item.empty()) continue;
    const auto x = item.find('x');
    if (x == std::string::npos) throw ConfigError("resolution '" + item + "' is not WxH");
    const std::size_t w = parse_size("resolution", item.substr(0, x));
    const std::size_t h = parse_size("resolution", item.substr(x + 1));
    if (w == 0 || h == 0) throw ConfigError("resolution '" + item + "' is empty");
    out.emplace_back(w, h);
  }
  if (out.empty()) throw ConfigError("no resolutions given");
  return out;
}

const std::vector<std::pair<std::size_t, std::size_t>>& reference_resolutions() {
  static const std::vector<std::pair<std::size_t, std::size_t>> r{
      {320, 240}, {480, 360}, {640, 480}, {768, 512}, {1280, 720}, {1920, 1080}, {4096, 2304}};
  return r;
}

}  // namespace informer
