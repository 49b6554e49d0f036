#pragma once

// Versioned tensor container.
//
// Layout, all integers little-endian:
//   magic    8 bytes  "VLORACKP"
//   version  u32      currently 1
//   count    u64      number of entries
//   entry*   count times:
//     name_len u32, name bytes (utf-8)
//     rank     u32, then rank x u64 extents
//     dtype    u8   (1 = f32, 2 = f64)
//     payload  row-major values, little-endian IEEE-754
// Entries keep insertion order, so saving the same tensors in the same order
// yields identical bytes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlora/tensor.hpp"

namespace vlora {

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Shape shape;
    DType dtype = DType::F32;
    std::vector<std::byte> payload;
  };

  template <typename T>
  void put(const std::string& name, const Tensor<T>& tensor);

  // Values are converted when the stored dtype differs from T.
  template <typename T>
  Tensor<T> get(const std::string& name) const;

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::byte> serialize() const;
  static Checkpoint deserialize(std::span<const std::byte> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  void add(Entry entry);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace vlora
