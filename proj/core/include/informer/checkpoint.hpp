// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint: model configuration, named parameters, Adam moments,
// step counter and the training RNG state. Little-endian throughout:
//
//   "INFK" | version u32
//   | variant u8 | C u32 | N u32 | heads u32 | transform u32 | lambda f64 | seed u64
//   | step u64 | rng seed u64 | rng state (u32 length, bytes)
//   | count u32 | per parameter: name (u16 length, bytes), rank u8, dims u32...,
//     values f64..., has moments u8, [m f64..., v f64...]
//
// Values are stored as 64-bit floats so a resumed run continues bit-exactly.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "informer/model.hpp"

namespace informer {

struct ParameterBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
  std::vector<double> adam_m;  // empty when no optimizer state
  std::vector<double> adam_v;
  bool operator==(const ParameterBlob&) const = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig model;
  std::uint64_t step = 0;
  std::uint64_t rng_seed = 0;
  std::string rng_state;
  std::vector<ParameterBlob> parameters;

  // Parameters of `model` with no optimizer state.
  static Checkpoint from_model(const InformerModel& model);
  // Builds a model and overwrites its parameters. Throws FormatError when
  // names or shapes do not match the configured architecture.
  InformerModel make_model() const;
  void load_into(InformerModel& model) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Convenience for the CLI: load and build the model.
InformerModel load_model(const std::filesystem::path& path);

}  // namespace informer
