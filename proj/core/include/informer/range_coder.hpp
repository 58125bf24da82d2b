// SPDX-License-Identifier: Apache-2.0
//
// Byte-oriented range coder with a 64-bit low register, a 32-bit range and
// carry propagation through a pending-byte cache. Frequencies come from
// CmfTable and must sum to 2^precision_bits (at most 16).
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "informer/entropy.hpp"

namespace informer {

class RangeEncoder {
 public:
  void encode(const CmfTable& table, std::int32_t symbol);
  // Raw cumulative interface; `total_bits` <= 16.
  void encode_range(std::uint32_t cum, std::uint32_t freq, unsigned total_bits);

  // Flushes the state and returns the coded bytes. The encoder is spent.
  std::vector<std::uint8_t> finish();

  // Renormalization byte shifts so far. A decoder reading a stream truncated
  // to 4 + shifts() bytes still recovers every symbol encoded up to here.
  std::size_t shifts() const { return shifts_; }

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool first_byte_ = true;  // the first emitted byte is always zero and is dropped
  bool finished_ = false;
  std::size_t shifts_ = 0;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  std::int32_t decode(const CmfTable& table);

  // Bytes requested beyond the end of the input (read as zero). Non-zero
  // after decoding means the stream was truncated.
  std::size_t overrun() const { return overrun_; }

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t overrun_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace informer
