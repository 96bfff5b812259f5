#include "healthvault/wire.hpp"

#include <cstring>

#include "healthvault/errors.hpp"

namespace healthvault {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out_.push_back(static_cast<char>((v >> (i * 8)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out_.push_back(static_cast<char>((v >> (i * 8)) & 0xff));
}

void ByteWriter::bytes(std::string_view b) {
  u32(static_cast<std::uint32_t>(b.size()));
  out_.append(b);
}

std::string_view ByteReader::raw(std::size_t n) {
  if (remaining() < n) throw Error(Errc::protocol_error, "truncated message");
  std::string_view v = data_.substr(pos_, n);
  pos_ += n;
  return v;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(raw(1)[0]); }

std::uint32_t ByteReader::u32() {
  auto b = raw(4);
  std::uint32_t v = 0;
  for (char c : b) v = (v << 8) | static_cast<unsigned char>(c);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = raw(8);
  std::uint64_t v = 0;
  for (char c : b) v = (v << 8) | static_cast<unsigned char>(c);
  return v;
}

std::string ByteReader::bytes() {
  std::uint32_t n = u32();
  return std::string(raw(n));
}

void ByteReader::expect_done() const {
  if (!done()) throw Error(Errc::protocol_error, "trailing bytes in message");
}

std::string Pseudonym::hex() const { return to_hex(view()); }

Pseudonym Pseudonym::from_view(std::string_view v) {
  if (v.size() != 16) throw Error(Errc::protocol_error, "pseudonym must be 16 bytes");
  Pseudonym p;
  std::memcpy(p.bytes.data(), v.data(), 16);
  return p;
}

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::deterministic: return "deterministic";
    case Scheme::order_preserving: return "order_preserving";
    case Scheme::opaque: return "opaque";
  }
  return "opaque";
}

bool valid_scheme(std::uint8_t raw) { return raw >= 1 && raw <= 3; }

void write_ciphertext(ByteWriter& w, const Ciphertext& ct) {
  w.u8(static_cast<std::uint8_t>(ct.scheme));
  w.raw(ct.column.view());
  w.bytes(ct.bytes);
}

Ciphertext read_ciphertext(ByteReader& r) {
  Ciphertext ct;
  std::uint8_t s = r.u8();
  if (!valid_scheme(s)) throw Error(Errc::protocol_error, "bad scheme id");
  ct.scheme = static_cast<Scheme>(s);
  ct.column = Pseudonym::from_view(r.raw(16));
  ct.bytes = r.bytes();
  return ct;
}

std::string encode_ciphertext(const Ciphertext& ct) {
  ByteWriter w;
  write_ciphertext(w, ct);
  return std::move(w).str();
}

Ciphertext decode_ciphertext(std::string_view wire) {
  ByteReader r(wire);
  Ciphertext ct = read_ciphertext(r);
  r.expect_done();
  return ct;
}

std::string to_hex(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xf]);
  }
  return out;
}

std::string from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::corrupt_state, "odd-length hex");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::corrupt_state, "bad hex digit");
  };
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<char>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
  }
  return out;
}

}  // namespace healthvault
