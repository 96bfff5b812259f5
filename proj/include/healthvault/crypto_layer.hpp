#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/value.hpp"
#include "healthvault/wire.hpp"

namespace healthvault::crypto {

using KeyBytes = std::array<std::uint8_t, 32>;

// Throws if libsodium cannot be initialized.
void init();

KeyBytes random_key();
std::string random_bytes(std::size_t n);
std::uint64_t random_u64();

std::string hmac_sha256(const KeyBytes& key, std::string_view message);
KeyBytes derive_key(const KeyBytes& master, std::string_view context);

struct ColumnKey {
  std::string table;
  std::string column;
  Scheme scheme = Scheme::opaque;
  ColumnId id;
  KeyBytes key_material{};
};

// SIV-style deterministic encryption: the IV is a keyed MAC of the plaintext,
// so equal values give equal ciphertexts and the IV doubles as integrity tag.
Ciphertext det_encrypt(const ColumnKey& key, const Value& v);
Value det_decrypt(const ColumnKey& key, const Ciphertext& ct);

// Randomized authenticated encryption of arbitrary bytes.
Ciphertext opaque_encrypt(const ColumnKey& key, std::string_view plaintext);
std::string opaque_decrypt(const ColumnKey& key, const Ciphertext& ct);

// Stateful order-preserving encoding: each column keeps a sorted dictionary of
// plaintext -> 64-bit code. New codes subdivide the gap between neighbours
// (with keyed jitter); a full gap triggers re-spacing of every code and bumps
// the generation, which invalidates ciphertexts issued earlier.
class OpeDictionary {
 public:
  explicit OpeDictionary(int code_bits = 64);

  // Domain check used by both encode and range bounds; throws DomainOverflow.
  static void check_domain(const Value& v);

  // Returns the code for `v`, inserting it when absent.
  std::uint64_t insert(const Value& v, const KeyBytes& jitter_key);
  std::optional<std::uint64_t> code_of(const Value& v) const;
  const Value* value_of(std::uint64_t code) const;
  // Smallest code whose value >= v / largest code whose value <= v.
  std::optional<std::uint64_t> lower_code(const Value& v) const;
  std::optional<std::uint64_t> upper_code(const Value& v) const;

  std::uint32_t generation() const { return generation_; }
  int code_bits() const { return code_bits_; }
  std::size_t size() const { return by_value_.size(); }
  const std::map<Value, std::uint64_t>& entries() const { return by_value_; }

  void restore(std::uint32_t generation, const std::vector<std::pair<Value, std::uint64_t>>& e);

 private:
  std::uint64_t max_code() const;
  void respace();

  int code_bits_;
  std::uint32_t generation_ = 0;
  std::map<Value, std::uint64_t> by_value_;
  std::map<std::uint64_t, Value> by_code_;
};

// Ciphertext bytes: 8-byte big-endian code || 8-byte keyed tag over
// (generation, code). Byte order of ciphertexts equals plaintext order.
Ciphertext ope_encrypt(const ColumnKey& key, OpeDictionary& dict, const Value& v);
// Encrypts a value already present in the dictionary without mutating it.
Ciphertext ope_encrypt_existing(const ColumnKey& key, const OpeDictionary& dict, const Value& v);
Value ope_decrypt(const ColumnKey& key, const OpeDictionary& dict, const Ciphertext& ct);

// Inclusive byte bounds for a plaintext range, or nullopt if no stored value
// falls inside. Either side may be open.
struct OpeRange {
  Ciphertext lo;
  Ciphertext hi;
};
std::optional<OpeRange> ope_range(const ColumnKey& key, const OpeDictionary& dict,
                                  const std::optional<Value>& lo,
                                  const std::optional<Value>& hi);

// Holds the name key, per-column keys and OPE dictionaries. Everything here is
// secret and stays on the trusted side.
class KeyRing {
 public:
  KeyRing();  // fresh random name key
  explicit KeyRing(const KeyBytes& name_key) : name_key_(name_key) {}

  const KeyBytes& name_key() const { return name_key_; }

  TableId table_id(std::string_view table) const;
  ColumnId column_id(std::string_view table, std::string_view column) const;

  // Get-or-create. Throws WrongScheme if the column exists under another scheme.
  const ColumnKey& column_key(const std::string& table, const std::string& column, Scheme scheme);
  const ColumnKey* find(const std::string& table, const std::string& column) const;

  OpeDictionary& ope(const std::string& table, const std::string& column);
  const OpeDictionary* find_ope(const std::string& table, const std::string& column) const;

  void set_ope_code_bits(int bits) { ope_code_bits_ = bits; }

  const std::map<std::pair<std::string, std::string>, ColumnKey>& keys() const { return keys_; }
  const std::map<std::pair<std::string, std::string>, OpeDictionary>& ope_dictionaries() const {
    return ope_;
  }
  void restore_key(ColumnKey k);
  void restore_ope(const std::string& table, const std::string& column, OpeDictionary d);

 private:
  KeyBytes name_key_{};
  int ope_code_bits_ = 64;
  std::map<std::pair<std::string, std::string>, ColumnKey> keys_;
  std::map<std::pair<std::string, std::string>, OpeDictionary> ope_;
};

}  // namespace healthvault::crypto
