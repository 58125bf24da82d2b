// SPDX-License-Identifier: Apache-2.0
#include "informer/bitstream.hpp"

#include <limits>

#include "informer/error.hpp"

namespace informer {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  const auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    using U = std::make_unsigned_t<T>;
    need(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(bytes_[pos_++]) << (8 * i));
    return static_cast<T>(u);
  }

  std::vector<std::uint8_t> take(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("bitstream truncated");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t Bitstream::payload_bits() const {
  std::size_t bytes = 0;
  for (const auto& s : segments) bytes += s.size();
  return 8 * bytes;
}

std::vector<std::uint8_t> serialize(const Bitstream& b) {
  std::vector<std::uint8_t> out;
  for (char c : Bitstream::kMagic) out.push_back(static_cast<std::uint8_t>(c));
  put(out, b.version);
  put(out, b.variant);
  put(out, b.model_hash);
  put(out, b.height);
  put(out, b.width);
  put(out, b.padded_height);
  put(out, b.padded_width);
  for (const auto& bound : b.bounds) {
    put(out, bound.min);
    put(out, bound.max);
  }
  for (const auto& seg : b.segments) {
    if (seg.size() > std::numeric_limits<std::uint32_t>::max()) throw FormatError("segment too long");
    put(out, static_cast<std::uint32_t>(seg.size()));
    out.insert(out.end(), seg.begin(), seg.end());
  }
  return out;
}

Bitstream parse(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char c : Bitstream::kMagic) {
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) throw FormatError("bad magic");
  }
  Bitstream b;
  b.version = r.get<std::uint8_t>();
  if (b.version != Bitstream::kVersion) throw FormatError("unknown bitstream version " + std::to_string(b.version));
  b.variant = r.get<std::uint8_t>();
  b.model_hash = r.get<std::uint64_t>();
  b.height = r.get<std::uint16_t>();
  b.width = r.get<std::uint16_t>();
  b.padded_height = r.get<std::uint16_t>();
  b.padded_width = r.get<std::uint16_t>();
  for (auto& bound : b.bounds) {
    bound.min = r.get<std::int16_t>();
    bound.max = r.get<std::int16_t>();
  }
  for (auto& seg : b.segments) seg = r.take(r.get<std::uint32_t>());
  if (!r.done()) throw FormatError("trailing bytes after bitstream");
  return b;
}

}  // namespace informer
