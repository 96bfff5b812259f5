#include "healthvault/crypto_layer.hpp"

#include <sodium.h>

#include <cstring>
#include <iterator>
#include <limits>

#include "healthvault/errors.hpp"

namespace healthvault::crypto {

namespace {

using u128 = unsigned __int128;

constexpr std::size_t kDetIvBytes = crypto_stream_xchacha20_NONCEBYTES;  // 24
constexpr std::size_t kOpeTagBytes = 8;
constexpr std::uint64_t kOpeOpenWindow = std::uint64_t{1} << 41;

const unsigned char* u8p(std::string_view s) {
  return reinterpret_cast<const unsigned char*>(s.data());
}

std::string be64(std::uint64_t v) {
  ByteWriter w;
  w.u64(v);
  return std::move(w).str();
}

void require_scheme(const ColumnKey& key, Scheme expected) {
  if (key.scheme != expected) {
    throw Error(Errc::wrong_scheme, "column " + key.table + "." + key.column + " is " +
                                        std::string(scheme_name(key.scheme)) + ", not " +
                                        std::string(scheme_name(expected)));
  }
}

void check_ciphertext(const ColumnKey& key, const Ciphertext& ct, Scheme expected) {
  require_scheme(key, expected);
  if (ct.scheme != expected) {
    throw Error(Errc::wrong_scheme, "ciphertext is " + std::string(scheme_name(ct.scheme)) +
                                        ", expected " + std::string(scheme_name(expected)));
  }
  if (ct.column != key.id) {
    throw Error(Errc::decrypt_auth_failure, "ciphertext belongs to another column");
  }
}

std::string ope_tag(const ColumnKey& key, std::uint32_t generation, std::uint64_t code) {
  ByteWriter w;
  w.raw("ope");
  w.u32(generation);
  w.u64(code);
  return hmac_sha256(derive_key(key.key_material, "ope-tag"), w.str()).substr(0, kOpeTagBytes);
}

Ciphertext ope_ciphertext(const ColumnKey& key, std::uint32_t generation, std::uint64_t code) {
  return Ciphertext{Scheme::order_preserving, key.id, be64(code) + ope_tag(key, generation, code)};
}

}  // namespace

void init() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error(Errc::invalid_argument, "libsodium initialization failed");
}

KeyBytes random_key() {
  init();
  KeyBytes k;
  randombytes_buf(k.data(), k.size());
  return k;
}

std::string random_bytes(std::size_t n) {
  init();
  std::string out(n, '\0');
  randombytes_buf(out.data(), n);
  return out;
}

std::uint64_t random_u64() {
  init();
  std::uint64_t v = 0;
  randombytes_buf(&v, sizeof v);
  return v;
}

std::string hmac_sha256(const KeyBytes& key, std::string_view message) {
  init();
  std::string out(crypto_auth_hmacsha256_BYTES, '\0');
  crypto_auth_hmacsha256(reinterpret_cast<unsigned char*>(out.data()), u8p(message),
                         message.size(), key.data());
  return out;
}

KeyBytes derive_key(const KeyBytes& master, std::string_view context) {
  init();
  KeyBytes out;
  crypto_generichash(out.data(), out.size(), u8p(context), context.size(), master.data(),
                     master.size());
  return out;
}

// ---- deterministic ---------------------------------------------------------

Ciphertext det_encrypt(const ColumnKey& key, const Value& v) {
  require_scheme(key, Scheme::deterministic);
  std::string pt = encode_value(v);
  std::string iv =
      hmac_sha256(derive_key(key.key_material, "det-mac"), pt).substr(0, kDetIvBytes);
  KeyBytes enc = derive_key(key.key_material, "det-enc");
  std::string body(pt.size(), '\0');
  crypto_stream_xchacha20_xor(reinterpret_cast<unsigned char*>(body.data()), u8p(pt), pt.size(),
                              u8p(iv), enc.data());
  return Ciphertext{Scheme::deterministic, key.id, iv + body};
}

Value det_decrypt(const ColumnKey& key, const Ciphertext& ct) {
  check_ciphertext(key, ct, Scheme::deterministic);
  if (ct.bytes.size() <= kDetIvBytes) {
    throw Error(Errc::decrypt_auth_failure, "deterministic ciphertext too short");
  }
  std::string_view iv(ct.bytes.data(), kDetIvBytes);
  std::string_view body(ct.bytes.data() + kDetIvBytes, ct.bytes.size() - kDetIvBytes);
  KeyBytes enc = derive_key(key.key_material, "det-enc");
  std::string pt(body.size(), '\0');
  crypto_stream_xchacha20_xor(reinterpret_cast<unsigned char*>(pt.data()), u8p(body),
                              body.size(), u8p(iv), enc.data());
  std::string expect =
      hmac_sha256(derive_key(key.key_material, "det-mac"), pt).substr(0, kDetIvBytes);
  if (sodium_memcmp(expect.data(), iv.data(), kDetIvBytes) != 0) {
    throw Error(Errc::decrypt_auth_failure, "deterministic ciphertext failed authentication");
  }
  return decode_value(pt);
}

// ---- opaque ----------------------------------------------------------------

Ciphertext opaque_encrypt(const ColumnKey& key, std::string_view plaintext) {
  require_scheme(key, Scheme::opaque);
  KeyBytes k = derive_key(key.key_material, "opaque");
  std::string nonce = random_bytes(crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
  std::string ad = std::string(1, static_cast<char>(Scheme::opaque)) + std::string(key.id.view());
  std::string out(plaintext.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES, '\0');
  unsigned long long len = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt(reinterpret_cast<unsigned char*>(out.data()), &len,
                                             u8p(plaintext), plaintext.size(), u8p(ad), ad.size(),
                                             nullptr, u8p(nonce), k.data());
  out.resize(len);
  return Ciphertext{Scheme::opaque, key.id, nonce + out};
}

std::string opaque_decrypt(const ColumnKey& key, const Ciphertext& ct) {
  check_ciphertext(key, ct, Scheme::opaque);
  constexpr std::size_t kNonce = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
  constexpr std::size_t kTag = crypto_aead_xchacha20poly1305_ietf_ABYTES;
  if (ct.bytes.size() < kNonce + kTag) {
    throw Error(Errc::decrypt_auth_failure, "opaque ciphertext too short");
  }
  KeyBytes k = derive_key(key.key_material, "opaque");
  std::string ad = std::string(1, static_cast<char>(Scheme::opaque)) + std::string(key.id.view());
  std::string_view body(ct.bytes.data() + kNonce, ct.bytes.size() - kNonce);
  std::string out(body.size() - kTag, '\0');
  unsigned long long len = 0;
  if (crypto_aead_xchacha20poly1305_ietf_decrypt(reinterpret_cast<unsigned char*>(out.data()),
                                                 &len, nullptr, u8p(body), body.size(), u8p(ad),
                                                 ad.size(), u8p(ct.bytes), k.data()) != 0) {
    throw Error(Errc::decrypt_auth_failure, "opaque ciphertext failed authentication");
  }
  out.resize(len);
  return out;
}

// ---- order-preserving ------------------------------------------------------

OpeDictionary::OpeDictionary(int code_bits) : code_bits_(code_bits) {
  if (code_bits < 2 || code_bits > 64) {
    throw Error(Errc::invalid_argument, "OPE code space must be 2..64 bits");
  }
}

std::uint64_t OpeDictionary::max_code() const {
  return code_bits_ == 64 ? std::numeric_limits<std::uint64_t>::max()
                          : (std::uint64_t{1} << code_bits_) - 1;
}

void OpeDictionary::check_domain(const Value& v) {
  constexpr std::int64_t kIntLimit = 1'000'000'000'000'000;  // 10^15
  auto year_ok = [](int y) { return y >= 1900 && y <= 2199; };
  switch (v.kind()) {
    case ValueKind::null:
    case ValueKind::time: return;
    case ValueKind::integer:
      if (v.as_integer() < -kIntLimit || v.as_integer() > kIntLimit) break;
      return;
    case ValueKind::decimal: {
      auto s = v.as_decimal().scaled;
      if (s < -kIntLimit * 1000 || s > kIntLimit * 1000) break;
      return;
    }
    case ValueKind::date:
      if (!year_ok(v.as_date().year())) break;
      return;
    case ValueKind::month:
      if (!year_ok(v.as_month().year())) break;
      return;
    case ValueKind::text:
      throw Error(Errc::domain_overflow, "text values have no order-preserving encoding");
  }
  throw Error(Errc::domain_overflow, "value " + v.str() + " is outside the ordered domain");
}

void OpeDictionary::respace() {
  u128 n = by_value_.size();
  u128 step = (u128(max_code()) + 1) / (n + 1);
  if (step == 0) {
    throw Error(Errc::domain_overflow, "order-preserving code space exhausted");
  }
  by_code_.clear();
  u128 i = 1;
  for (auto& [value, code] : by_value_) {
    code = static_cast<std::uint64_t>(step * i++);
    by_code_.emplace(code, value);
  }
  ++generation_;
}

std::uint64_t OpeDictionary::insert(const Value& v, const KeyBytes& jitter_key) {
  check_domain(v);
  if (auto it = by_value_.find(v); it != by_value_.end()) return it->second;

  auto succ = by_value_.upper_bound(v);
  bool has_succ = succ != by_value_.end();
  bool has_pred = succ != by_value_.begin();
  std::uint64_t pred_code = has_pred ? std::prev(succ)->second : 0;
  std::uint64_t succ_code = has_succ ? succ->second : 0;

  bool exhausted = (has_pred && pred_code == max_code()) || (has_succ && succ_code == 0);
  u128 lo = has_pred ? u128(pred_code) + 1 : 0;
  u128 hi = has_succ ? u128(succ_code) - 1 : u128(max_code());
  if (exhausted || lo > hi) {
    if (by_value_.size() >= max_code()) {
      throw Error(Errc::domain_overflow, "order-preserving code space exhausted");
    }
    by_value_.emplace(v, 0);
    respace();
    return by_value_.at(v);
  }

  u128 width = hi - lo + 1;
  u128 wlo = lo;
  u128 wsize = width;
  if (has_pred && !has_succ && width > kOpeOpenWindow) {
    wsize = kOpeOpenWindow;
  } else if (!has_pred && has_succ && width > kOpeOpenWindow) {
    wsize = kOpeOpenWindow;
    wlo = hi - wsize + 1;
  }
  std::uint64_t jitter = 0;
  std::string mac = hmac_sha256(jitter_key, encode_value(v));
  std::memcpy(&jitter, mac.data(), sizeof jitter);
  u128 code = wsize <= 4 ? wlo + wsize / 2 : wlo + wsize / 4 + u128(jitter) % (wsize / 2);

  auto c = static_cast<std::uint64_t>(code);
  by_value_.emplace(v, c);
  by_code_.emplace(c, v);
  return c;
}

std::optional<std::uint64_t> OpeDictionary::code_of(const Value& v) const {
  auto it = by_value_.find(v);
  if (it == by_value_.end()) return std::nullopt;
  return it->second;
}

const Value* OpeDictionary::value_of(std::uint64_t code) const {
  auto it = by_code_.find(code);
  return it == by_code_.end() ? nullptr : &it->second;
}

std::optional<std::uint64_t> OpeDictionary::lower_code(const Value& v) const {
  auto it = by_value_.lower_bound(v);
  if (it == by_value_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint64_t> OpeDictionary::upper_code(const Value& v) const {
  auto it = by_value_.upper_bound(v);
  if (it == by_value_.begin()) return std::nullopt;
  return std::prev(it)->second;
}

void OpeDictionary::restore(std::uint32_t generation,
                            const std::vector<std::pair<Value, std::uint64_t>>& entries) {
  generation_ = generation;
  by_value_.clear();
  by_code_.clear();
  for (const auto& [v, c] : entries) {
    if (c > max_code() || !by_value_.emplace(v, c).second || !by_code_.emplace(c, v).second) {
      throw Error(Errc::corrupt_state, "inconsistent order-preserving dictionary");
    }
  }
  std::uint64_t prev = 0;
  bool first = true;
  for (const auto& [v, c] : by_value_) {
    if (!first && c <= prev) {
      throw Error(Errc::corrupt_state, "order-preserving dictionary codes out of order");
    }
    prev = c;
    first = false;
  }
}

Ciphertext ope_encrypt(const ColumnKey& key, OpeDictionary& dict, const Value& v) {
  require_scheme(key, Scheme::order_preserving);
  std::uint64_t code = dict.insert(v, derive_key(key.key_material, "ope-jitter"));
  return ope_ciphertext(key, dict.generation(), code);
}

Ciphertext ope_encrypt_existing(const ColumnKey& key, const OpeDictionary& dict,
                                const Value& v) {
  require_scheme(key, Scheme::order_preserving);
  auto code = dict.code_of(v);
  if (!code) {
    throw Error(Errc::invalid_argument, "value " + v.str() + " has no order-preserving code yet");
  }
  return ope_ciphertext(key, dict.generation(), *code);
}

Value ope_decrypt(const ColumnKey& key, const OpeDictionary& dict, const Ciphertext& ct) {
  check_ciphertext(key, ct, Scheme::order_preserving);
  if (ct.bytes.size() != 8 + kOpeTagBytes) {
    throw Error(Errc::decrypt_auth_failure, "order-preserving ciphertext has the wrong length");
  }
  ByteReader r(ct.bytes);
  std::uint64_t code = r.u64();
  std::string expect = ope_tag(key, dict.generation(), code);
  if (sodium_memcmp(expect.data(), ct.bytes.data() + 8, kOpeTagBytes) != 0) {
    throw Error(Errc::decrypt_auth_failure, "order-preserving ciphertext failed authentication");
  }
  const Value* v = dict.value_of(code);
  if (v == nullptr) {
    throw Error(Errc::decrypt_auth_failure, "order-preserving code is not in the dictionary");
  }
  return *v;
}

std::optional<OpeRange> ope_range(const ColumnKey& key, const OpeDictionary& dict,
                                  const std::optional<Value>& lo,
                                  const std::optional<Value>& hi) {
  require_scheme(key, Scheme::order_preserving);
  if (lo) OpeDictionary::check_domain(*lo);
  if (hi) OpeDictionary::check_domain(*hi);
  if (dict.size() == 0) return std::nullopt;
  // NULL sorts first in the dictionary but never matches a range.
  std::optional<std::uint64_t> lo_code;
  if (lo) {
    lo_code = dict.lower_code(*lo);
  } else {
    auto first = dict.entries().begin();
    if (first->first.is_null()) ++first;
    lo_code = first == dict.entries().end() ? std::nullopt : std::optional(first->second);
  }
  auto hi_code = hi ? dict.upper_code(*hi) : std::optional(dict.entries().rbegin()->second);
  if (!lo_code || !hi_code || *lo_code > *hi_code) return std::nullopt;
  return OpeRange{
      Ciphertext{Scheme::order_preserving, key.id, be64(*lo_code) + std::string(8, '\x00')},
      Ciphertext{Scheme::order_preserving, key.id, be64(*hi_code) + std::string(8, '\xff')}};
}

// ---- key ring --------------------------------------------------------------

KeyRing::KeyRing() : name_key_(random_key()) {}

TableId KeyRing::table_id(std::string_view table) const {
  std::string msg = std::string("t\0", 2) + std::string(table);
  return Pseudonym::from_view(std::string_view(hmac_sha256(name_key_, msg)).substr(0, 16));
}

ColumnId KeyRing::column_id(std::string_view table, std::string_view column) const {
  std::string msg =
      std::string("c\0", 2) + std::string(table) + std::string(1, '\0') + std::string(column);
  return Pseudonym::from_view(std::string_view(hmac_sha256(name_key_, msg)).substr(0, 16));
}

const ColumnKey& KeyRing::column_key(const std::string& table, const std::string& column,
                                     Scheme scheme) {
  auto key = std::make_pair(table, column);
  auto it = keys_.find(key);
  if (it != keys_.end()) {
    require_scheme(it->second, scheme);
    return it->second;
  }
  ColumnKey k{table, column, scheme, column_id(table, column), random_key()};
  return keys_.emplace(key, std::move(k)).first->second;
}

const ColumnKey* KeyRing::find(const std::string& table, const std::string& column) const {
  auto it = keys_.find({table, column});
  return it == keys_.end() ? nullptr : &it->second;
}

OpeDictionary& KeyRing::ope(const std::string& table, const std::string& column) {
  auto key = std::make_pair(table, column);
  auto it = ope_.find(key);
  if (it == ope_.end()) it = ope_.emplace(key, OpeDictionary(ope_code_bits_)).first;
  return it->second;
}

const OpeDictionary* KeyRing::find_ope(const std::string& table, const std::string& column) const {
  auto it = ope_.find({table, column});
  return it == ope_.end() ? nullptr : &it->second;
}

void KeyRing::restore_key(ColumnKey k) {
  auto key = std::make_pair(k.table, k.column);
  keys_.insert_or_assign(key, std::move(k));
}

void KeyRing::restore_ope(const std::string& table, const std::string& column, OpeDictionary d) {
  ope_.insert_or_assign({table, column}, std::move(d));
}

}  // namespace healthvault::crypto
