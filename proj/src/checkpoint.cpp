#include "vlora/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vlora {

namespace {

constexpr char kMagic[8] = {'V', 'L', 'O', 'R', 'A', 'C', 'K', 'P'};

template <typename U>
void put_le(std::vector<std::byte>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  std::span<const std::byte> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("checkpoint: truncated data");
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
  }
  throw Error("checkpoint: unknown dtype tag");
}

template <typename T>
void encode_values(std::span<const T> values, std::vector<std::byte>& out) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  out.reserve(values.size() * sizeof(T));
  for (T v : values) put_le(out, std::bit_cast<Bits>(v));
}

template <typename Stored, typename T>
std::vector<T> decode_values(std::span<const std::byte> payload) {
  using Bits = std::conditional_t<sizeof(Stored) == 4, std::uint32_t, std::uint64_t>;
  Reader r(payload);
  std::vector<T> out(payload.size() / sizeof(Stored));
  for (auto& v : out) v = static_cast<T>(std::bit_cast<Stored>(r.le<Bits>()));
  return out;
}

}  // namespace

void Checkpoint::add(Entry entry) {
  if (contains(entry.name)) throw Error("checkpoint: duplicate entry '" + entry.name + "'");
  index_.emplace(entry.name, entries_.size());
  entries_.push_back(std::move(entry));
}

template <typename T>
void Checkpoint::put(const std::string& name, const Tensor<T>& tensor) {
  Entry e;
  e.name = name;
  e.shape = tensor.shape();
  e.dtype = dtype_of<T>();
  encode_values(tensor.data(), e.payload);
  add(std::move(e));
}

template <typename T>
Tensor<T> Checkpoint::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("checkpoint: missing entry '" + name + "'");
  const auto& e = entries_[it->second];
  auto values = e.dtype == DType::F32 ? decode_values<float, T>(e.payload) : decode_values<double, T>(e.payload);
  return Tensor<T>(e.shape, std::move(values));
}

std::vector<std::byte> Checkpoint::serialize() const {
  std::vector<std::byte> out;
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    for (char c : e.name) out.push_back(static_cast<std::byte>(c));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto extent : e.shape) put_le<std::uint64_t>(out, extent);
    out.push_back(static_cast<std::byte>(e.dtype));
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::byte> bytes) {
  Reader r(bytes);
  const auto magic = r.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw Error("checkpoint: bad magic");
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.le<std::uint64_t>();
  Checkpoint ckpt;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    const auto name = r.take(r.le<std::uint32_t>());
    e.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
    const auto rank = r.le<std::uint32_t>();
    if (rank == 0 || rank > kMaxRank) throw Error("checkpoint: bad rank for '" + e.name + "'");
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.le<std::uint64_t>());
    e.dtype = static_cast<DType>(r.le<std::uint8_t>());
    const auto payload = r.take(numel(e.shape) * dtype_size(e.dtype));
    e.payload.assign(payload.begin(), payload.end());
    ckpt.add(std::move(e));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("checkpoint: write to '" + path.string() + "' failed");
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

template void Checkpoint::put(const std::string&, const Tensor<float>&);
template void Checkpoint::put(const std::string&, const Tensor<double>&);
template Tensor<float> Checkpoint::get(const std::string&) const;
template Tensor<double> Checkpoint::get(const std::string&) const;

}  // namespace vlora
