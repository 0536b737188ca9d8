#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "pairint/error.hpp"

// Little-endian primitives shared by the FLOW1, PIRN1 and EMB1 containers.
namespace pairint::binio {

template <typename U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xff));
    return out;
  }
  return v;
}

template <typename U>
void put(std::string& buf, U v) {
  static_assert(std::is_unsigned_v<U>);
  v = to_le(v);
  char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  buf.append(bytes, sizeof(U));
}

inline void put_f32(std::string& buf, float f) { put(buf, std::bit_cast<std::uint32_t>(f)); }

/// Bounds-checked cursor over an in-memory byte buffer.
class Reader {
 public:
  Reader(std::span<const char> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename U>
  U get() {
    static_assert(std::is_unsigned_v<U>);
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return to_le(v);
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::CorruptFile, what_ + ": unexpected end of data");
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// Whole file contents; Io error when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace pairint::binio
