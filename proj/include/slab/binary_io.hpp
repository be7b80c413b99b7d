#pragma once

// Little-endian primitive encoding shared by the dataset (BOWS) and
// checkpoint (SLAB) containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "slab/error.hpp"

namespace slab::io {

class BinaryWriter {
 public:
  void bytes(std::string_view raw) { buffer_.insert(buffer_.end(), raw.begin(), raw.end()); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void scalar(T value) {
    using Bits = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    static_assert(sizeof(T) == sizeof(Bits));
    Bits bits;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buffer_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }

  void u8(std::uint8_t v) { scalar(v); }
  void u32(std::uint32_t v) { scalar(v); }
  void u64(std::uint64_t v) { scalar(v); }
  void f64(double v) { scalar(v); }

  // u32 byte length followed by the UTF-8 bytes.
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  template <typename T>
  void array(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const char*>(values.data());
      buffer_.insert(buffer_.end(), p, p + values.size_bytes());
    } else {
      for (const T& v : values) scalar(v);
    }
  }

  const std::vector<char>& buffer() const { return buffer_; }

  // Writes to `path` via a temporary file renamed into place.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<char> buffer_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::vector<char> data, std::string source = {})
      : data_(std::move(data)), source_(std::move(source)) {}

  static BinaryReader from_file(const std::filesystem::path& path);

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T scalar() {
    using Bits = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    need(sizeof(T));
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<Bits>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }

  std::uint8_t u8() { return scalar<std::uint8_t>(); }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  double f64() { return scalar<double>(); }
  std::string string() { return std::string(bytes(u32())); }

  template <typename T>
  std::vector<T> array(std::size_t count) {
    if (count > (data_.size() - pos_) / sizeof(T)) fail("array extends past end of file");
    std::vector<T> out(count);
    for (auto& v : out) v = scalar<T>();
    return out;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError((source_.empty() ? std::string() : source_ + ": ") + what +
                      " (offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) fail("unexpected end of file");
  }

  std::vector<char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace slab::io
