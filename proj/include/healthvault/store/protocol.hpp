#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/errors.hpp"
#include "healthvault/wire.hpp"

// Binary request/response protocol spoken between the vault and the store.
//
// Frame:    u32 big-endian length || body
// Request:  u8 message kind || payload
// Response: u8 status (0 = ok, otherwise 1 + error code) || payload
//           on error the payload is a u32-length-prefixed message.
//
// Ciphertexts use the wire form from wire.hpp. Rows are
//   u64 handle || u32 cell count || ciphertext*
namespace healthvault::store {

using Handle = std::uint64_t;

enum class MessageKind : std::uint8_t {
  create_table = 1,
  put_rows = 2,
  scan_point = 3,
  scan_range = 4,
  put_object = 5,
  get_object = 6,
  dump_log = 7,
  scan_all = 8,
  get_rows = 9,
  replace_rows = 10,
  list_objects = 11,
  commit_batch = 12,
  txn_status = 13,
  ping = 14,
};

std::string_view message_kind_name(MessageKind k);
bool valid_message_kind(std::uint8_t raw);

struct ColumnSpec {
  ColumnId id;
  Scheme scheme = Scheme::opaque;

  bool operator==(const ColumnSpec&) const = default;
};

struct EncryptedRow {
  Handle handle = 0;
  std::vector<Ciphertext> cells;

  const Ciphertext* cell(const ColumnId& column) const;
  bool operator==(const EncryptedRow&) const = default;
};

struct EncryptedObject {
  Handle handle = 0;
  Ciphertext class_tag;  // deterministic
  Ciphertext payload;    // opaque

  bool operator==(const EncryptedObject&) const = default;
};

struct LogEntry {
  MessageKind kind = MessageKind::ping;
  std::uint64_t timestamp_ms = 0;
  std::string body;  // the raw request body as received
};

// One mutation inside commit_batch. Only create_table, put_rows,
// replace_rows and put_object are allowed.
struct BatchOp {
  MessageKind kind = MessageKind::put_rows;
  TableId table;
  std::vector<ColumnSpec> columns;  // create_table
  std::vector<EncryptedRow> rows;   // put_rows (handles ignored) / replace_rows
  EncryptedObject object;           // put_object

  bool operator==(const BatchOp&) const = default;
};

struct TxnStatus {
  bool committed = false;
  // Handles assigned per op: rows for put_rows, one entry for put_object,
  // empty for the others.
  std::vector<std::vector<Handle>> handles;
};

// Component codecs.
void write_columns(ByteWriter& w, const std::vector<ColumnSpec>& cols);
std::vector<ColumnSpec> read_columns(ByteReader& r);
void write_row(ByteWriter& w, const EncryptedRow& row);
EncryptedRow read_row(ByteReader& r);
void write_rows(ByteWriter& w, const std::vector<EncryptedRow>& rows);
std::vector<EncryptedRow> read_rows(ByteReader& r);
void write_object(ByteWriter& w, const EncryptedObject& obj);
EncryptedObject read_object(ByteReader& r);
void write_handles(ByteWriter& w, const std::vector<Handle>& hs);
std::vector<Handle> read_handles(ByteReader& r);
void write_batch_op(ByteWriter& w, const BatchOp& op);
BatchOp read_batch_op(ByteReader& r);

std::string ok_response(std::string_view payload = {});
std::string error_response(Errc code, std::string_view message);
// Returns the payload of an ok response; throws the carried Error otherwise.
std::string_view unwrap_response(std::string_view response);

std::string frame(std::string_view body);

}  // namespace healthvault::store
