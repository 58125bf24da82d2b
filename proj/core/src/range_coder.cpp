// SPDX-License-Identifier: Apache-2.0
#include "informer/range_coder.hpp"

#include <algorithm>

#include "informer/error.hpp"

namespace informer {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void RangeEncoder::encode(const CmfTable& table, std::int32_t symbol) {
  if (symbol < table.min_symbol || symbol > table.max_symbol()) {
    throw DomainError("symbol " + std::to_string(symbol) + " outside coding alphabet");
  }
  const auto i = static_cast<std::size_t>(symbol - table.min_symbol);
  encode_range(table.cum[i], table.freq[i], table.precision_bits);
}

void RangeEncoder::encode_range(std::uint32_t cum, std::uint32_t freq, unsigned total_bits) {
  if (finished_) throw Error("range encoder already finished");
  if (total_bits > 16 || freq == 0 || cum + freq > (1u << total_bits)) {
    throw DomainError("invalid frequency interval");
  }
  const std::uint32_t r = range_ >> total_bits;
  low_ += static_cast<std::uint64_t>(r) * cum;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
    ++shifts_;
  }
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      const auto byte = static_cast<std::uint8_t>(temp + carry);
      if (first_byte_) {
        first_byte_ = false;
      } else {
        out_.push_back(byte);
      }
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (finished_) throw Error("range encoder already finished");
  for (int i = 0; i < 5; ++i) shift_low();
  finished_ = true;
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ < bytes_.size()) return bytes_[pos_++];
  ++overrun_;
  return 0;
}

std::int32_t RangeDecoder::decode(const CmfTable& table) {
  const std::uint32_t r = range_ >> table.precision_bits;
  const std::uint32_t v = code_ / r;
  if (v >= table.total()) throw FormatError("corrupt range-coded stream");
  // Last cum entry <= v.
  const auto it = std::upper_bound(table.cum.begin(), table.cum.end(), v);
  const auto i = static_cast<std::size_t>(it - table.cum.begin()) - 1;
  code_ -= r * table.cum[i];
  range_ = r * table.freq[i];
  while (range_ < kTop) {
    range_ <<= 8;
    code_ = (code_ << 8) | next_byte();
  }
  return table.min_symbol + static_cast<std::int32_t>(i);
}

}  // namespace informer
