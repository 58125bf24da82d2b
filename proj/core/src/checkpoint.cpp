// SPDX-License-Identifier: Apache-2.0
#include "informer/checkpoint.hpp"

#include <bit>
#include <limits>

#include "informer/error.hpp"
#include "informer/image.hpp"

namespace informer {

namespace {

constexpr char kMagic[4] = {'I', 'N', 'F', 'K'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto u = static_cast<std::make_unsigned_t<T>>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void doubles(const std::vector<double>& v) {
    for (double d : v) f64(d);
  }
  template <typename Len>
  void str(const std::string& s) {
    if (s.size() > std::numeric_limits<Len>::max()) throw FormatError("string too long for checkpoint");
    put(static_cast<Len>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(bytes[pos++]) << (8 * i));
    }
    return static_cast<T>(u);
  }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::vector<double> doubles(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (double& d : v) d = f64();
    return v;
  }
  template <typename Len>
  std::string str() {
    const std::size_t n = get<Len>();
    need(n);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw FormatError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

}  // namespace

Checkpoint Checkpoint::from_model(const InformerModel& model) {
  Checkpoint c;
  c.model = model.config();
  for (const auto& p : model.parameters()) {
    ParameterBlob blob;
    blob.name = p.name;
    blob.shape = p.tensor.shape();
    blob.values.assign(p.tensor.values().begin(), p.tensor.values().end());
    c.parameters.push_back(std::move(blob));
  }
  return c;
}

void Checkpoint::load_into(InformerModel& model) const {
  auto params = model.parameters();
  if (params.size() != parameters.size()) throw FormatError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& blob = parameters[i];
    if (blob.name != params[i].name || blob.shape != params[i].tensor.shape()) {
      throw FormatError("checkpoint parameter '" + blob.name + "' does not match '" + params[i].name + "'");
    }
    auto dst = params[i].tensor.mutable_values();
    std::copy(blob.values.begin(), blob.values.end(), dst.begin());
  }
}

InformerModel Checkpoint::make_model() const {
  InformerModel m(model);
  load_into(m);
  return m;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  for (char ch : kMagic) w.put(static_cast<std::uint8_t>(ch));
  w.put(Checkpoint::kVersion);
  w.put(static_cast<std::uint8_t>(c.model.variant));
  w.put(static_cast<std::uint32_t>(c.model.latent_channels));
  w.put(static_cast<std::uint32_t>(c.model.global_tokens));
  w.put(static_cast<std::uint32_t>(c.model.num_heads));
  w.put(static_cast<std::uint32_t>(c.model.transform_channels));
  w.f64(c.model.lambda);
  w.put(c.model.seed);
  w.put(c.step);
  w.put(c.rng_seed);
  w.str<std::uint32_t>(c.rng_state);
  w.put(static_cast<std::uint32_t>(c.parameters.size()));
  for (const auto& p : c.parameters) {
    const std::size_t n = shape_numel(p.shape);
    if (p.values.size() != n) throw FormatError("parameter '" + p.name + "' has inconsistent size");
    const bool moments = !p.adam_m.empty();
    if (moments && (p.adam_m.size() != n || p.adam_v.size() != n)) {
      throw FormatError("optimizer state of '" + p.name + "' has inconsistent size");
    }
    w.str<std::uint16_t>(p.name);
    w.put(static_cast<std::uint8_t>(p.shape.size()));
    for (auto d : p.shape) w.put(static_cast<std::uint32_t>(d));
    w.doubles(p.values);
    w.put(static_cast<std::uint8_t>(moments ? 1 : 0));
    if (moments) {
      w.doubles(p.adam_m);
      w.doubles(p.adam_v);
    }
  }
  return std::move(w.out);
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char ch : kMagic) {
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(ch)) throw FormatError("not a checkpoint file");
  }
  if (r.get<std::uint32_t>() != Checkpoint::kVersion) throw FormatError("unsupported checkpoint version");
  Checkpoint c;
  const auto variant = variant_from_id(r.get<std::uint8_t>());
  if (!variant) throw FormatError("checkpoint has an unknown variant id");
  c.model.variant = *variant;
  c.model.latent_channels = r.get<std::uint32_t>();
  c.model.global_tokens = r.get<std::uint32_t>();
  c.model.num_heads = r.get<std::uint32_t>();
  c.model.transform_channels = r.get<std::uint32_t>();
  c.model.lambda = r.f64();
  c.model.seed = r.get<std::uint64_t>();
  c.step = r.get<std::uint64_t>();
  c.rng_seed = r.get<std::uint64_t>();
  c.rng_state = r.str<std::uint32_t>();
  const std::uint32_t count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    ParameterBlob p;
    p.name = r.str<std::uint16_t>();
    const std::size_t rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::size_t k = 0; k < rank; ++k) {
      p.shape.push_back(r.get<std::uint32_t>());
      if (p.shape.back() == 0) throw FormatError("checkpoint parameter has a zero dimension");
      n *= p.shape.back();
      if (n > bytes.size()) throw FormatError("checkpoint truncated");
    }
    p.values = r.doubles(n);
    const auto moments = r.get<std::uint8_t>();
    if (moments > 1) throw FormatError("bad optimizer-state flag");
    if (moments) {
      p.adam_m = r.doubles(n);
      p.adam_v = r.doubles(n);
    }
    c.parameters.push_back(std::move(p));
  }
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after checkpoint");
  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint configuration invalid: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  // Write to a sibling and rename so an interrupted save never clobbers the
  // previous good checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write_file(tmp, serialize_checkpoint(c));
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

InformerModel load_model(const std::filesystem::path& path) { return load_checkpoint(path).make_model(); }

}  // namespace informer
