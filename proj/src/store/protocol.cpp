#include "healthvault/store/protocol.hpp"

namespace healthvault::store {

std::string_view message_kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::create_table: return "create_table";
    case MessageKind::put_rows: return "put_rows";
    case MessageKind::scan_point: return "scan_point";
    case MessageKind::scan_range: return "scan_range";
    case MessageKind::put_object: return "put_object";
    case MessageKind::get_object: return "get_object";
    case MessageKind::dump_log: return "dump_log";
    case MessageKind::scan_all: return "scan_all";
    case MessageKind::get_rows: return "get_rows";
    case MessageKind::replace_rows: return "replace_rows";
    case MessageKind::list_objects: return "list_objects";
    case MessageKind::commit_batch: return "commit_batch";
    case MessageKind::txn_status: return "txn_status";
    case MessageKind::ping: return "ping";
  }
  return "unknown";
}

bool valid_message_kind(std::uint8_t raw) { return raw >= 1 && raw <= 14; }

const Ciphertext* EncryptedRow::cell(const ColumnId& column) const {
  for (const auto& c : cells) {
    if (c.column == column) return &c;
  }
  return nullptr;
}

void write_columns(ByteWriter& w, const std::vector<ColumnSpec>& cols) {
  w.u32(static_cast<std::uint32_t>(cols.size()));
  for (const auto& c : cols) {
    w.raw(c.id.view());
    w.u8(static_cast<std::uint8_t>(c.scheme));
  }
}

std::vector<ColumnSpec> read_columns(ByteReader& r) {
  std::uint32_t n = r.u32();
  std::vector<ColumnSpec> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    ColumnSpec c;
    c.id = Pseudonym::from_view(r.raw(16));
    std::uint8_t s = r.u8();
    if (!valid_scheme(s)) throw Error(Errc::protocol_error, "bad scheme id in column spec");
    c.scheme = static_cast<Scheme>(s);
    out.push_back(c);
  }
  return out;
}

void write_row(ByteWriter& w, const EncryptedRow& row) {
  w.u64(row.handle);
  w.u32(static_cast<std::uint32_t>(row.cells.size()));
  for (const auto& c : row.cells) write_ciphertext(w, c);
}

EncryptedRow read_row(ByteReader& r) {
  EncryptedRow row;
  row.handle = r.u64();
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) row.cells.push_back(read_ciphertext(r));
  return row;
}

void write_rows(ByteWriter& w, const std::vector<EncryptedRow>& rows) {
  w.u32(static_cast<std::uint32_t>(rows.size()));
  for (const auto& row : rows) write_row(w, row);
}

std::vector<EncryptedRow> read_rows(ByteReader& r) {
  std::uint32_t n = r.u32();
  std::vector<EncryptedRow> out;
  out.reserve(std::min<std::uint32_t>(n, 1u << 16));
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(read_row(r));
  return out;
}

void write_object(ByteWriter& w, const EncryptedObject& obj) {
  w.u64(obj.handle);
  write_ciphertext(w, obj.class_tag);
  write_ciphertext(w, obj.payload);
}

EncryptedObject read_object(ByteReader& r) {
  EncryptedObject obj;
  obj.handle = r.u64();
  obj.class_tag = read_ciphertext(r);
  obj.payload = read_ciphertext(r);
  return obj;
}

void write_handles(ByteWriter& w, const std::vector<Handle>& hs) {
  w.u32(static_cast<std::uint32_t>(hs.size()));
  for (auto h : hs) w.u64(h);
}

std::vector<Handle> read_handles(ByteReader& r) {
  std::uint32_t n = r.u32();
  std::vector<Handle> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.u64());
  return out;
}

void write_batch_op(ByteWriter& w, const BatchOp& op) {
  w.u8(static_cast<std::uint8_t>(op.kind));
  switch (op.kind) {
    case MessageKind::create_table:
      w.raw(op.table.view());
      write_columns(w, op.columns);
      return;
    case MessageKind::put_rows:
    case MessageKind::replace_rows:
      w.raw(op.table.view());
      write_rows(w, op.rows);
      return;
    case MessageKind::put_object:
      write_object(w, op.object);
      return;
    default:
      throw Error(Errc::protocol_error, "message kind not allowed in a batch");
  }
}

BatchOp read_batch_op(ByteReader& r) {
  BatchOp op;
  std::uint8_t k = r.u8();
  if (!valid_message_kind(k)) throw Error(Errc::protocol_error, "bad batch op kind");
  op.kind = static_cast<MessageKind>(k);
  switch (op.kind) {
    case MessageKind::create_table:
      op.table = Pseudonym::from_view(r.raw(16));
      op.columns = read_columns(r);
      return op;
    case MessageKind::put_rows:
    case MessageKind::replace_rows:
      op.table = Pseudonym::from_view(r.raw(16));
      op.rows = read_rows(r);
      return op;
    case MessageKind::put_object:
      op.object = read_object(r);
      return op;
    default:
      throw Error(Errc::protocol_error, "message kind not allowed in a batch");
  }
}

std::string ok_response(std::string_view payload) {
  std::string out(1, '\0');
  out.append(payload);
  return out;
}

std::string error_response(Errc code, std::string_view message) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(1 + static_cast<int>(code)));
  w.bytes(message);
  return std::move(w).str();
}

std::string_view unwrap_response(std::string_view response) {
  if (response.empty()) throw Error(Errc::protocol_error, "empty response");
  auto status = static_cast<std::uint8_t>(response[0]);
  if (status == 0) return response.substr(1);
  ByteReader r(response.substr(1));
  std::string message = r.bytes();
  int code = status - 1;
  if (code > static_cast<int>(Errc::corrupt_state)) code = static_cast<int>(Errc::protocol_error);
  throw Error(static_cast<Errc>(code), message);
}

std::string frame(std::string_view body) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.raw(body);
  return std::move(w).str();
}

}  // namespace healthvault::store
