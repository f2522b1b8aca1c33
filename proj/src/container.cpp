// SPDX-License-Identifier: Apache-2.0
#include "lmtc/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lmtc/error.hpp"

namespace lmtc {
namespace {

constexpr char kMagic[8] = {'L', 'M', 'T', 'C', 'B', 'O', 'X', '\0'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = get_le<T>(data_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::vector<std::uint8_t> raw(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return v;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error("container truncated");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32:
    case DType::kU32:
      return 4;
    case DType::kF64:
      return 8;
    case DType::kBytes:
      return 1;
  }
  return 1;
}

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

void Container::add_f32(std::string name, std::vector<std::uint64_t> shape,
                        std::span<const float> values) {
  if (element_count(shape) != values.size())
    throw Error("section " + name + ": shape does not match value count");
  Section s{std::move(name), DType::kF32, std::move(shape), {}};
  s.payload.reserve(values.size() * 4);
  for (float v : values) put_le(s.payload, v);
  sections_.push_back(std::move(s));
}

void Container::add_f32(std::string name, std::vector<std::uint64_t> shape,
                        std::span<const double> values) {
  std::vector<float> f(values.begin(), values.end());
  add_f32(std::move(name), std::move(shape), std::span<const float>(f));
}

void Container::add_f64(std::string name, std::vector<std::uint64_t> shape,
                        std::span<const double> values) {
  if (element_count(shape) != values.size())
    throw Error("section " + name + ": shape does not match value count");
  Section s{std::move(name), DType::kF64, std::move(shape), {}};
  s.payload.reserve(values.size() * 8);
  for (double v : values) put_le(s.payload, v);
  sections_.push_back(std::move(s));
}

void Container::add_u32(std::string name, std::vector<std::uint64_t> shape,
                        std::span<const std::uint32_t> values) {
  if (element_count(shape) != values.size())
    throw Error("section " + name + ": shape does not match value count");
  Section s{std::move(name), DType::kU32, std::move(shape), {}};
  s.payload.reserve(values.size() * 4);
  for (auto v : values) put_le(s.payload, v);
  sections_.push_back(std::move(s));
}

void Container::add_bytes(std::string name, std::string_view bytes) {
  Section s{std::move(name), DType::kBytes, {bytes.size()}, {}};
  s.payload.assign(bytes.begin(), bytes.end());
  sections_.push_back(std::move(s));
}

bool Container::has(std::string_view name) const {
  return std::any_of(sections_.begin(), sections_.end(),
                     [&](const Section& s) { return s.name == name; });
}

const Section& Container::section(std::string_view name) const {
  for (const auto& s : sections_)
    if (s.name == name) return s;
  throw Error("container has no section '" + std::string(name) + "'");
}

std::vector<float> Container::f32(std::string_view name) const {
  const Section& s = section(name);
  if (s.dtype != DType::kF32)
    throw Error("section '" + std::string(name) + "' is not float32");
  std::vector<float> out(s.payload.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = get_le<float>(s.payload.data() + 4 * i);
  return out;
}

std::vector<double> Container::real(std::string_view name) const {
  const Section& s = section(name);
  if (s.dtype == DType::kF32) {
    auto f = f32(name);
    return {f.begin(), f.end()};
  }
  if (s.dtype != DType::kF64)
    throw Error("section '" + std::string(name) + "' is not floating point");
  std::vector<double> out(s.payload.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = get_le<double>(s.payload.data() + 8 * i);
  return out;
}

std::vector<std::uint32_t> Container::u32(std::string_view name) const {
  const Section& s = section(name);
  if (s.dtype != DType::kU32)
    throw Error("section '" + std::string(name) + "' is not uint32");
  std::vector<std::uint32_t> out(s.payload.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = get_le<std::uint32_t>(s.payload.data() + 4 * i);
  return out;
}

std::string Container::bytes(std::string_view name) const {
  const Section& s = section(name);
  return {s.payload.begin(), s.payload.end()};
}

std::vector<std::uint8_t> Container::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kContainerVersion);
  put_le(out, static_cast<std::uint32_t>(kind_.size()));
  out.insert(out.end(), kind_.begin(), kind_.end());
  const std::string hdr = header_.dump();
  put_le(out, static_cast<std::uint32_t>(hdr.size()));
  out.insert(out.end(), hdr.begin(), hdr.end());
  put_le(out, static_cast<std::uint32_t>(sections_.size()));
  for (const auto& s : sections_) {
    put_le(out, static_cast<std::uint32_t>(s.name.size()));
    out.insert(out.end(), s.name.begin(), s.name.end());
    out.push_back(static_cast<std::uint8_t>(s.dtype));
    put_le(out, static_cast<std::uint32_t>(s.shape.size()));
    for (auto d : s.shape) put_le(out, d);
    put_le(out, static_cast<std::uint64_t>(s.payload.size()));
    out.insert(out.end(), s.payload.begin(), s.payload.end());
  }
  return out;
}

Container Container::deserialize(std::span<const std::uint8_t> data) {
  Reader r(data);
  if (r.str(8) != std::string(kMagic, 8)) throw Error("not an lmtc container");
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion)
    throw Error("container format version " + std::to_string(version) +
                " unsupported (this build reads version " +
                std::to_string(kContainerVersion) + ")");
  Container c(r.str(r.get<std::uint32_t>()));
  const std::string hdr = r.str(r.get<std::uint32_t>());
  try {
    c.header_ = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("container header: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Section s;
    s.name = r.str(r.get<std::uint32_t>());
    const auto dt = r.get<std::uint8_t>();
    if (dt > static_cast<std::uint8_t>(DType::kBytes))
      throw Error("section '" + s.name + "': unknown dtype");
    s.dtype = static_cast<DType>(dt);
    const auto ndim = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < ndim; ++d) s.shape.push_back(r.get<std::uint64_t>());
    const auto len = r.get<std::uint64_t>();
    if (len != element_count(s.shape) * dtype_size(s.dtype))
      throw Error("section '" + s.name + "': payload size mismatch");
    s.payload = r.raw(len);
    c.sections_.push_back(std::move(s));
  }
  if (!r.done()) throw Error("trailing bytes after container sections");
  return c;
}

void Container::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Container Container::load(const std::filesystem::path& path,
                          std::string_view expected_kind) {
  Container c = load(path);
  if (c.kind() != expected_kind)
    throw Error(path.string() + ": expected a '" + std::string(expected_kind) +
                "' artifact, found '" + c.kind() + "'");
  return c;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  return fnv1a(std::span<const std::uint8_t>(
                   reinterpret_cast<const std::uint8_t*>(s.data()), s.size()),
               seed);
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t seed) {
  std::vector<std::uint8_t> buf;
  buf.reserve(values.size() * 8);
  for (double v : values) put_le(buf, v);
  return fnv1a(buf, seed);
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = kDigits[v & 0xf];
  return s;
}

}  // namespace lmtc
