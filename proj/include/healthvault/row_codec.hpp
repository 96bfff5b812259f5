#pragma once

#include <optional>
#include <string>
#include <vector>

#include "healthvault/crypto_layer.hpp"
#include "healthvault/schema_manager.hpp"
#include "healthvault/store/protocol.hpp"

// Maps plaintext rows of a table schema to encrypted store rows and back.
namespace healthvault::codec {

// Creates the column keys of `table` (if missing) and returns the store-side
// column list.
std::vector<store::ColumnSpec> column_specs(crypto::KeyRing& ring, const schema::TableSchema& table);

// Gives every order-preserving value of the row a code. Must run for all rows
// of a batch before any of them is encrypted.
void register_ordered_values(crypto::KeyRing& ring, const schema::TableSchema& table,
                             const std::vector<Binding>& cells);

// Missing visible columns are encrypted as NULL. Non-source provenance is
// recorded in the hidden provenance cell when the table has one.
store::EncryptedRow encrypt_row(const crypto::KeyRing& ring, const schema::TableSchema& table,
                                const std::vector<Binding>& cells, store::Handle handle = 0);

// Visible columns in schema order with provenance restored.
std::vector<Binding> decrypt_row(const crypto::KeyRing& ring, const schema::TableSchema& table,
                                 const store::EncryptedRow& row);

// Equality literal for a deterministic column.
Ciphertext point_literal(const crypto::KeyRing& ring, const std::string& table,
                         const std::string& column, const Value& v);
// Inclusive byte bounds for an order-preserving column; nullopt when no
// stored value can match.
std::optional<crypto::OpeRange> range_literal(const crypto::KeyRing& ring, const std::string& table,
                                              const std::string& column,
                                              const std::optional<Value>& lo,
                                              const std::optional<Value>& hi);

// Payload envelope for stored objects: their metadata tags plus the bytes.
std::string encode_envelope(const std::vector<Binding>& tags, const std::string& content);
std::pair<std::vector<Binding>, std::string> decode_envelope(std::string_view bytes);

}  // namespace healthvault::codec
