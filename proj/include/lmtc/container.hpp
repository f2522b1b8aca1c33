// SPDX-License-Identifier: Apache-2.0
#pragma once

// Self-describing binary container shared by every model artifact.
//
//   magic     8 bytes  "LMTCBOX\0"
//   version   u32
//   kind      u32 length + bytes       ("plt", "lwan", "vocab", ...)
//   header    u32 length + JSON bytes  (keys sorted)
//   count     u32
//   section*  u32 name length + name, u8 dtype, u32 ndim, u64 dims[ndim],
//             u64 payload length + payload
//
// All integers and floating point payloads are little-endian.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace lmtc {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU32 = 2, kBytes = 3 };

struct Section {
  std::string name;
  DType dtype = DType::kBytes;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> payload;  // little-endian element bytes
};

class Container {
 public:
  Container() = default;
  explicit Container(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  nlohmann::json& header() { return header_; }
  const nlohmann::json& header() const { return header_; }
  const std::vector<Section>& sections() const { return sections_; }

  void add_f32(std::string name, std::vector<std::uint64_t> shape,
               std::span<const float> values);
  // Rounds each value to float32.
  void add_f32(std::string name, std::vector<std::uint64_t> shape,
               std::span<const double> values);
  void add_f64(std::string name, std::vector<std::uint64_t> shape,
               std::span<const double> values);
  void add_u32(std::string name, std::vector<std::uint64_t> shape,
               std::span<const std::uint32_t> values);
  void add_bytes(std::string name, std::string_view bytes);

  bool has(std::string_view name) const;
  const Section& section(std::string_view name) const;
  std::vector<float> f32(std::string_view name) const;
  // Accepts f32 or f64 sections.
  std::vector<double> real(std::string_view name) const;
  std::vector<std::uint32_t> u32(std::string_view name) const;
  std::string bytes(std::string_view name) const;

  std::vector<std::uint8_t> serialize() const;
  static Container deserialize(std::span<const std::uint8_t> data);

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);
  // Loads and checks the kind tag.
  static Container load(const std::filesystem::path& path,
                        std::string_view expected_kind);

 private:
  std::string kind_;
  nlohmann::json header_ = nlohmann::json::object();
  std::vector<Section> sections_;
};

// 64-bit FNV-1a, used for content fingerprints.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::span<const double> values,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace lmtc
