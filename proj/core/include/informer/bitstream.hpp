// SPDX-License-Identifier: Apache-2.0
//
// Compressed-image container. All integers are little-endian:
//
//   "INFC" | version u8 | variant u8 | model hash u64
//   | height u16 | width u16 | padded height u16 | padded width u16
//   | 3 x (min i16, max i16)          alphabet bounds per segment
//   | 3 x (length u32, bytes)         z_g, z_l, y_hat
//
// Segments a variant does not use are empty with bounds (0, 0).
#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace informer {

struct SymbolBounds {
  std::int16_t min = 0;
  std::int16_t max = 0;
  bool operator==(const SymbolBounds&) const = default;
};

struct Bitstream {
  static constexpr std::array<char, 4> kMagic{'I', 'N', 'F', 'C'};
  static constexpr std::uint8_t kVersion = 1;
  enum Segment : std::size_t { kGlobal = 0, kLocal = 1, kLatent = 2 };

  std::uint8_t version = kVersion;
  std::uint8_t variant = 0;
  std::uint64_t model_hash = 0;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint16_t padded_height = 0;
  std::uint16_t padded_width = 0;
  std::array<SymbolBounds, 3> bounds{};
  std::array<std::vector<std::uint8_t>, 3> segments{};

  bool operator==(const Bitstream&) const = default;

  // Coded payload bits (segment bytes only, no header or length fields).
  std::size_t payload_bits() const;
};

std::vector<std::uint8_t> serialize(const Bitstream& b);
// Throws FormatError on bad magic, unknown version, short reads or trailing
// bytes.
Bitstream parse(const std::vector<std::uint8_t>& bytes);

}  // namespace informer
