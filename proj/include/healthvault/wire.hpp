#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace healthvault {

// Big-endian writer for the store protocol and segment records.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void raw(std::string_view bytes) { out_.append(bytes); }
  // u32 length prefix followed by the bytes.
  void bytes(std::string_view bytes);

  const std::string& str() const& { return out_; }
  std::string str() && { return std::move(out_); }

 private:
  std::string out_;
};

// Reader over a borrowed buffer; throws Error(protocol_error) on underrun.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::string_view raw(std::size_t n);
  std::string bytes();

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_done() const;

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

// Keyed pseudonym for a table or column name. The store only ever sees these.
struct Pseudonym {
  std::array<std::uint8_t, 16> bytes{};

  std::string hex() const;
  std::string_view view() const {
    return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
  }
  static Pseudonym from_view(std::string_view v);

  auto operator<=>(const Pseudonym&) const = default;
};

using TableId = Pseudonym;
using ColumnId = Pseudonym;

enum class Scheme : std::uint8_t {
  deterministic = 1,
  order_preserving = 2,
  opaque = 3,
};

std::string_view scheme_name(Scheme s);
bool valid_scheme(std::uint8_t raw);

// Wire form: scheme_id (1 byte) || column id (16 bytes) || u32 length || bytes.
struct Ciphertext {
  Scheme scheme = Scheme::opaque;
  ColumnId column;
  std::string bytes;

  bool operator==(const Ciphertext&) const = default;
};

void write_ciphertext(ByteWriter& w, const Ciphertext& ct);
Ciphertext read_ciphertext(ByteReader& r);
std::string encode_ciphertext(const Ciphertext& ct);
Ciphertext decode_ciphertext(std::string_view wire);

std::string to_hex(std::string_view bytes);
std::string from_hex(std::string_view hex);

}  // namespace healthvault
