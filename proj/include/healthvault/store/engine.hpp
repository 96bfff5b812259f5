#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/store/protocol.hpp"

namespace healthvault::store {

// Append-only files of length+crc framed records:
//   u32 length || u32 crc32(payload) || payload
// rolled over into <stem>-NNNNNN.seg once a file passes roll_bytes.
class SegmentSet {
 public:
  SegmentSet(std::filesystem::path dir, std::string stem, std::uint64_t roll_bytes, bool sync);
  ~SegmentSet();
  SegmentSet(const SegmentSet&) = delete;
  SegmentSet& operator=(const SegmentSet&) = delete;

  // Replays every intact record in order. A torn or corrupt tail of the last
  // segment is truncated; damage in an earlier segment is CorruptState.
  void load(const std::function<void(std::string_view)>& fn);
  void append(std::string_view payload);

  std::vector<std::filesystem::path> files() const;

 private:
  void open_current();

  std::filesystem::path dir_;
  std::string stem_;
  std::uint64_t roll_bytes_;
  bool sync_;
  int fd_ = -1;
  std::uint32_t index_ = 1;
  std::uint64_t size_ = 0;
};

struct EngineOptions {
  std::filesystem::path data_dir;  // empty keeps everything in memory
  std::uint64_t segment_bytes = 8u << 20;
  bool sync = true;
};

// The untrusted store. It holds pseudonymous tables of ciphertext cells and
// opaque objects and answers equality and byte-range scans over them. It
// records every request it receives in an observation log.
class StoreEngine {
 public:
  explicit StoreEngine(EngineOptions options = {});

  // Full request in, full response out. Never throws.
  std::string handle(std::string_view request);

  void create_table(const TableId& table, std::vector<ColumnSpec> columns);
  std::vector<Handle> put_rows(const TableId& table, std::vector<EncryptedRow> rows);
  void replace_rows(const TableId& table, std::vector<EncryptedRow> rows);
  Handle put_object(EncryptedObject obj);
  std::vector<std::vector<Handle>> commit_batch(std::uint64_t txn, std::vector<BatchOp> ops);

  std::vector<EncryptedRow> scan_point(const TableId& table, const ColumnId& column,
                                       const Ciphertext& key) const;
  std::vector<EncryptedRow> scan_range(const TableId& table, const ColumnId& column,
                                       const Ciphertext& lo, const Ciphertext& hi) const;
  std::vector<EncryptedRow> scan_all(const TableId& table) const;
  std::vector<EncryptedRow> get_rows(const TableId& table, const std::vector<Handle>& handles) const;
  EncryptedObject get_object(Handle h) const;
  std::vector<Handle> list_objects(const Ciphertext& class_tag) const;
  TxnStatus txn_status(std::uint64_t txn) const;

  std::vector<LogEntry> log() const;
  std::size_t table_count() const;
  std::size_t row_count(const TableId& table) const;
  std::size_t object_count() const;

 private:
  struct Table {
    std::vector<ColumnSpec> columns;
    std::map<Handle, EncryptedRow> rows;
  };

  std::string dispatch(MessageKind kind, ByteReader& r);
  void record(MessageKind kind, std::string_view request);
  std::vector<std::vector<Handle>> apply(std::uint64_t txn, std::vector<BatchOp> ops);
  void validate(const std::vector<BatchOp>& ops) const;
  void install(std::uint64_t txn, std::vector<BatchOp>& ops);
  void replay(std::string_view payload);
  const Table& table(const TableId& id) const;
  const ColumnSpec& column(const Table& t, const ColumnId& id) const;

  EngineOptions options_;
  mutable std::shared_mutex mu_;
  std::map<TableId, Table> tables_;
  std::map<Handle, EncryptedObject> objects_;
  std::map<std::uint64_t, std::vector<std::vector<Handle>>> txns_;
  Handle next_handle_ = 1;
  std::unique_ptr<SegmentSet> data_;

  mutable std::mutex log_mu_;
  std::vector<LogEntry> log_;
  std::unique_ptr<SegmentSet> observations_;
};

}  // namespace healthvault::store
