#include "healthvault/store/engine.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

namespace healthvault::store {

namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kBatchRecord = 1;

std::uint32_t crc_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::uint64_t now_ms() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}

std::string segment_name(const std::string& stem, std::uint32_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%06u.seg", index);
  return stem + buf;
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::corrupt_state, "segment write failed");
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string read_whole(const fs::path& p) {
  std::string out;
  int fd = ::open(p.c_str(), O_RDONLY);
  if (fd < 0) throw Error(Errc::corrupt_state, "cannot open " + p.string());
  char buf[1 << 16];
  for (;;) {
    ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fd);
  return out;
}

std::string encode_log_entry(const LogEntry& e) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(e.kind));
  w.u64(e.timestamp_ms);
  w.raw(e.body);
  return std::move(w).str();
}

}  // namespace

// ---- segments --------------------------------------------------------------

SegmentSet::SegmentSet(fs::path dir, std::string stem, std::uint64_t roll_bytes, bool sync)
    : dir_(std::move(dir)), stem_(std::move(stem)), roll_bytes_(roll_bytes), sync_(sync) {
  fs::create_directories(dir_);
}

SegmentSet::~SegmentSet() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<fs::path> SegmentSet::files() const {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir_)) {
    auto name = e.path().filename().string();
    if (name.size() == stem_.size() + 11 && name.rfind(stem_ + "-", 0) == 0 &&
        name.ends_with(".seg")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void SegmentSet::load(const std::function<void(std::string_view)>& fn) {
  auto segs = files();
  for (std::size_t i = 0; i < segs.size(); ++i) {
    bool last = i + 1 == segs.size();
    std::string data = read_whole(segs[i]);
    std::size_t pos = 0;
    while (pos < data.size()) {
      bool ok = data.size() - pos >= 8;
      std::uint32_t len = 0;
      std::uint32_t crc = 0;
      if (ok) {
        ByteReader r(std::string_view(data).substr(pos, 8));
        len = r.u32();
        crc = r.u32();
        ok = data.size() - pos - 8 >= len &&
             crc_of(std::string_view(data).substr(pos + 8, len)) == crc;
      }
      if (!ok) {
        if (!last) throw Error(Errc::corrupt_state, "damaged record in " + segs[i].string());
        fs::resize_file(segs[i], pos);
        break;
      }
      fn(std::string_view(data).substr(pos + 8, len));
      pos += 8 + len;
    }
  }
  if (!segs.empty()) {
    auto name = segs.back().filename().string();
    index_ = static_cast<std::uint32_t>(std::stoul(name.substr(stem_.size() + 1, 6)));
  }
  open_current();
}

void SegmentSet::open_current() {
  if (fd_ >= 0) ::close(fd_);
  auto p = dir_ / segment_name(stem_, index_);
  fd_ = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0600);
  if (fd_ < 0) throw Error(Errc::corrupt_state, "cannot open segment " + p.string());
  size_ = fs::file_size(p);
}

void SegmentSet::append(std::string_view payload) {
  if (fd_ < 0) open_current();
  if (size_ >= roll_bytes_) {
    ++index_;
    open_current();
  }
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.u32(crc_of(payload));
  w.raw(payload);
  write_all(fd_, w.str());
  if (sync_) ::fdatasync(fd_);
  size_ += w.str().size();
}

// ---- engine ----------------------------------------------------------------

StoreEngine::StoreEngine(EngineOptions options) : options_(std::move(options)) {
  if (options_.data_dir.empty()) return;
  data_ = std::make_unique<SegmentSet>(options_.data_dir, "data", options_.segment_bytes,
                                       options_.sync);
  data_->load([this](std::string_view payload) { replay(payload); });
  observations_ = std::make_unique<SegmentSet>(options_.data_dir, "observations",
                                               options_.segment_bytes, false);
  observations_->load([this](std::string_view payload) {
    ByteReader r(payload);
    LogEntry e;
    e.kind = static_cast<MessageKind>(r.u8());
    e.timestamp_ms = r.u64();
    e.body = std::string(r.raw(r.remaining()));
    log_.push_back(std::move(e));
  });
}

void StoreEngine::record(MessageKind kind, std::string_view request) {
  LogEntry e{kind, now_ms(), std::string(request)};
  std::lock_guard lock(log_mu_);
  if (observations_) observations_->append(encode_log_entry(e));
  log_.push_back(std::move(e));
}

std::string StoreEngine::handle(std::string_view request) {
  try {
    if (request.empty()) throw Error(Errc::protocol_error, "empty request");
    auto raw = static_cast<std::uint8_t>(request[0]);
    record(static_cast<MessageKind>(raw), request);
    if (!valid_message_kind(raw)) throw Error(Errc::protocol_error, "unknown message kind");
    ByteReader r(request.substr(1));
    return dispatch(static_cast<MessageKind>(raw), r);
  } catch (const Error& e) {
    return error_response(e.code(), e.what());
  } catch (const std::exception& e) {
    return error_response(Errc::protocol_error, e.what());
  }
}

std::string StoreEngine::dispatch(MessageKind kind, ByteReader& r) {
  ByteWriter out;
  auto table_id = [&] { return Pseudonym::from_view(r.raw(16)); };
  switch (kind) {
    case MessageKind::create_table: {
      auto t = table_id();
      auto cols = read_columns(r);
      r.expect_done();
      create_table(t, std::move(cols));
      break;
    }
    case MessageKind::put_rows: {
      auto t = table_id();
      auto rows = read_rows(r);
      r.expect_done();
      write_handles(out, put_rows(t, std::move(rows)));
      break;
    }
    case MessageKind::scan_point: {
      auto t = table_id();
      auto c = Pseudonym::from_view(r.raw(16));
      auto key = read_ciphertext(r);
      r.expect_done();
      write_rows(out, scan_point(t, c, key));
      break;
    }
    case MessageKind::scan_range: {
      auto t = table_id();
      auto c = Pseudonym::from_view(r.raw(16));
      auto lo = read_ciphertext(r);
      auto hi = read_ciphertext(r);
      r.expect_done();
      write_rows(out, scan_range(t, c, lo, hi));
      break;
    }
    case MessageKind::put_object: {
      auto obj = read_object(r);
      r.expect_done();
      out.u64(put_object(std::move(obj)));
      break;
    }
    case MessageKind::get_object: {
      Handle h = r.u64();
      r.expect_done();
      write_object(out, get_object(h));
      break;
    }
    case MessageKind::dump_log: {
      r.expect_done();
      auto entries = log();
      out.u32(static_cast<std::uint32_t>(entries.size()));
      for (const auto& e : entries) {
        out.u8(static_cast<std::uint8_t>(e.kind));
        out.u64(e.timestamp_ms);
        out.bytes(e.body);
      }
      break;
    }
    case MessageKind::scan_all: {
      auto t = table_id();
      r.expect_done();
      write_rows(out, scan_all(t));
      break;
    }
    case MessageKind::get_rows: {
      auto t = table_id();
      auto hs = read_handles(r);
      r.expect_done();
      write_rows(out, get_rows(t, hs));
      break;
    }
    case MessageKind::replace_rows: {
      auto t = table_id();
      auto rows = read_rows(r);
      r.expect_done();
      replace_rows(t, std::move(rows));
      break;
    }
    case MessageKind::list_objects: {
      auto tag = read_ciphertext(r);
      r.expect_done();
      write_handles(out, list_objects(tag));
      break;
    }
    case MessageKind::commit_batch: {
      std::uint64_t txn = r.u64();
      std::uint32_t n = r.u32();
      std::vector<BatchOp> ops;
      for (std::uint32_t i = 0; i < n; ++i) ops.push_back(read_batch_op(r));
      r.expect_done();
      auto handles = commit_batch(txn, std::move(ops));
      out.u32(static_cast<std::uint32_t>(handles.size()));
      for (const auto& hs : handles) write_handles(out, hs);
      break;
    }
    case MessageKind::txn_status: {
      std::uint64_t txn = r.u64();
      r.expect_done();
      auto st = txn_status(txn);
      out.u8(st.committed ? 1 : 0);
      out.u32(static_cast<std::uint32_t>(st.handles.size()));
      for (const auto& hs : st.handles) write_handles(out, hs);
      break;
    }
    case MessageKind::ping:
      r.expect_done();
      break;
  }
  return ok_response(out.str());
}

// ---- mutations -------------------------------------------------------------

void StoreEngine::create_table(const TableId& table, std::vector<ColumnSpec> columns) {
  BatchOp op;
  op.kind = MessageKind::create_table;
  op.table = table;
  op.columns = std::move(columns);
  apply(0, {std::move(op)});
}

std::vector<Handle> StoreEngine::put_rows(const TableId& table, std::vector<EncryptedRow> rows) {
  BatchOp op;
  op.kind = MessageKind::put_rows;
  op.table = table;
  op.rows = std::move(rows);
  return apply(0, {std::move(op)}).front();
}

void StoreEngine::replace_rows(const TableId& table, std::vector<EncryptedRow> rows) {
  BatchOp op;
  op.kind = MessageKind::replace_rows;
  op.table = table;
  op.rows = std::move(rows);
  apply(0, {std::move(op)});
}

Handle StoreEngine::put_object(EncryptedObject obj) {
  BatchOp op;
  op.kind = MessageKind::put_object;
  op.object = std::move(obj);
  return apply(0, {std::move(op)}).front().front();
}

std::vector<std::vector<Handle>> StoreEngine::commit_batch(std::uint64_t txn,
                                                           std::vector<BatchOp> ops) {
  if (txn == 0) throw Error(Errc::invalid_argument, "transaction id 0 is reserved");
  return apply(txn, std::move(ops));
}

std::vector<std::vector<Handle>> StoreEngine::apply(std::uint64_t txn, std::vector<BatchOp> ops) {
  std::unique_lock lock(mu_);
  if (txn != 0) {
    auto it = txns_.find(txn);
    if (it != txns_.end()) return it->second;
  }
  validate(ops);
  for (auto& op : ops) {
    if (op.kind == MessageKind::put_rows) {
      for (auto& row : op.rows) row.handle = next_handle_++;
    } else if (op.kind == MessageKind::put_object) {
      op.object.handle = next_handle_++;
    }
  }
  if (data_) {
    ByteWriter w;
    w.u8(kBatchRecord);
    w.u64(txn);
    w.u32(static_cast<std::uint32_t>(ops.size()));
    for (const auto& op : ops) write_batch_op(w, op);
    data_->append(w.str());
  }
  install(txn, ops);
  return txn != 0 ? txns_.at(txn) : [&] {
    std::vector<std::vector<Handle>> out;
    for (const auto& op : ops) {
      std::vector<Handle> hs;
      if (op.kind == MessageKind::put_rows) {
        for (const auto& row : op.rows) hs.push_back(row.handle);
      } else if (op.kind == MessageKind::put_object) {
        hs.push_back(op.object.handle);
      }
      out.push_back(std::move(hs));
    }
    return out;
  }();
}

void StoreEngine::validate(const std::vector<BatchOp>& ops) const {
  std::map<TableId, const std::vector<ColumnSpec>*> staged;
  auto columns_of = [&](const TableId& t) -> const std::vector<ColumnSpec>& {
    if (auto it = staged.find(t); it != staged.end()) return *it->second;
    return table(t).columns;
  };
  auto check_row = [](const std::vector<ColumnSpec>& cols, const EncryptedRow& row) {
    if (row.cells.size() != cols.size()) {
      throw Error(Errc::invalid_argument, "row does not cover every column exactly once");
    }
    std::set<ColumnId> seen;
    for (const auto& c : row.cells) {
      auto it = std::find_if(cols.begin(), cols.end(),
                             [&](const ColumnSpec& s) { return s.id == c.column; });
      if (it == cols.end()) throw Error(Errc::invalid_argument, "cell names an unknown column");
      if (it->scheme != c.scheme) {
        throw Error(Errc::scheme_mismatch, "cell scheme differs from its column");
      }
      if (!seen.insert(c.column).second) {
        throw Error(Errc::invalid_argument, "column given twice in one row");
      }
    }
  };
  std::set<Handle> replaced;
  for (const auto& op : ops) {
    switch (op.kind) {
      case MessageKind::create_table: {
        if (op.columns.empty()) throw Error(Errc::invalid_argument, "table without columns");
        std::set<ColumnId> ids;
        for (const auto& c : op.columns) {
          if (!ids.insert(c.id).second) throw Error(Errc::invalid_argument, "duplicate column");
        }
        const std::vector<ColumnSpec>* existing = nullptr;
        if (auto it = staged.find(op.table); it != staged.end()) existing = it->second;
        if (auto it = tables_.find(op.table); it != tables_.end()) existing = &it->second.columns;
        if (existing && *existing != op.columns) {
          throw Error(Errc::invalid_argument, "table exists with different columns");
        }
        staged[op.table] = &op.columns;
        break;
      }
      case MessageKind::put_rows: {
        const auto& cols = columns_of(op.table);
        for (const auto& row : op.rows) check_row(cols, row);
        break;
      }
      case MessageKind::replace_rows: {
        const auto& cols = columns_of(op.table);
        auto it = tables_.find(op.table);
        for (const auto& row : op.rows) {
          check_row(cols, row);
          if (it == tables_.end() || !it->second.rows.contains(row.handle)) {
            throw Error(Errc::unknown_row, "no row with handle " + std::to_string(row.handle));
          }
        }
        break;
      }
      case MessageKind::put_object:
        if (op.object.class_tag.scheme != Scheme::deterministic ||
            op.object.payload.scheme != Scheme::opaque) {
          throw Error(Errc::scheme_mismatch, "objects need a deterministic tag and opaque payload");
        }
        break;
      default:
        throw Error(Errc::protocol_error, "message kind not allowed in a batch");
    }
  }
}

void StoreEngine::install(std::uint64_t txn, std::vector<BatchOp>& ops) {
  std::vector<std::vector<Handle>> handles;
  for (auto& op : ops) {
    std::vector<Handle> hs;
    switch (op.kind) {
      case MessageKind::create_table:
        if (!tables_.contains(op.table)) tables_[op.table].columns = op.columns;
        break;
      case MessageKind::put_rows:
      case MessageKind::replace_rows: {
        auto& t = tables_.at(op.table);
        for (auto& row : op.rows) {
          // Store cells in column order.
          EncryptedRow ordered{row.handle, {}};
          for (const auto& col : t.columns) {
            if (const auto* c = row.cell(col.id)) ordered.cells.push_back(*c);
          }
          if (op.kind == MessageKind::put_rows) hs.push_back(row.handle);
          next_handle_ = std::max(next_handle_, row.handle + 1);
          t.rows[row.handle] = std::move(ordered);
        }
        break;
      }
      case MessageKind::put_object:
        hs.push_back(op.object.handle);
        next_handle_ = std::max(next_handle_, op.object.handle + 1);
        objects_[op.object.handle] = op.object;
        break;
      default:
        break;
    }
    handles.push_back(std::move(hs));
  }
  if (txn != 0) txns_[txn] = std::move(handles);
}

void StoreEngine::replay(std::string_view payload) {
  ByteReader r(payload);
  if (r.u8() != kBatchRecord) throw Error(Errc::corrupt_state, "unknown segment record type");
  std::uint64_t txn = r.u64();
  std::uint32_t n = r.u32();
  std::vector<BatchOp> ops;
  for (std::uint32_t i = 0; i < n; ++i) ops.push_back(read_batch_op(r));
  r.expect_done();
  install(txn, ops);
}

// ---- reads -----------------------------------------------------------------

const StoreEngine::Table& StoreEngine::table(const TableId& id) const {
  auto it = tables_.find(id);
  if (it == tables_.end()) throw Error(Errc::unknown_table, "unknown table " + id.hex());
  return it->second;
}

const ColumnSpec& StoreEngine::column(const Table& t, const ColumnId& id) const {
  for (const auto& c : t.columns) {
    if (c.id == id) return c;
  }
  throw Error(Errc::invalid_argument, "unknown column " + id.hex());
}

std::vector<EncryptedRow> StoreEngine::scan_point(const TableId& table_id, const ColumnId& col,
                                                  const Ciphertext& key) const {
  std::shared_lock lock(mu_);
  const auto& t = table(table_id);
  const auto& spec = column(t, col);
  if (spec.scheme != Scheme::deterministic || key.scheme != Scheme::deterministic ||
      key.column != col) {
    throw Error(Errc::scheme_mismatch, "point scans need a deterministic column and key");
  }
  std::vector<EncryptedRow> out;
  for (const auto& [h, row] : t.rows) {
    const auto* c = row.cell(col);
    if (c && c->bytes == key.bytes) out.push_back(row);
  }
  return out;
}

std::vector<EncryptedRow> StoreEngine::scan_range(const TableId& table_id, const ColumnId& col,
                                                  const Ciphertext& lo,
                                                  const Ciphertext& hi) const {
  std::shared_lock lock(mu_);
  const auto& t = table(table_id);
  const auto& spec = column(t, col);
  for (const auto* b : {&lo, &hi}) {
    if (spec.scheme != Scheme::order_preserving || b->scheme != Scheme::order_preserving ||
        b->column != col) {
      throw Error(Errc::scheme_mismatch, "range scans need an order-preserving column and bounds");
    }
  }
  if (lo.bytes > hi.bytes) throw Error(Errc::inverted_range, "range lower bound exceeds upper");
  std::vector<EncryptedRow> out;
  for (const auto& [h, row] : t.rows) {
    const auto* c = row.cell(col);
    if (c && lo.bytes <= c->bytes && c->bytes <= hi.bytes) out.push_back(row);
  }
  return out;
}

std::vector<EncryptedRow> StoreEngine::scan_all(const TableId& table_id) const {
  std::shared_lock lock(mu_);
  const auto& t = table(table_id);
  std::vector<EncryptedRow> out;
  out.reserve(t.rows.size());
  for (const auto& [h, row] : t.rows) out.push_back(row);
  return out;
}

std::vector<EncryptedRow> StoreEngine::get_rows(const TableId& table_id,
                                                const std::vector<Handle>& handles) const {
  std::shared_lock lock(mu_);
  const auto& t = table(table_id);
  std::vector<EncryptedRow> out;
  for (Handle h : handles) {
    auto it = t.rows.find(h);
    if (it == t.rows.end()) throw Error(Errc::unknown_row, "no row with handle " + std::to_string(h));
    out.push_back(it->second);
  }
  return out;
}

EncryptedObject StoreEngine::get_object(Handle h) const {
  std::shared_lock lock(mu_);
  auto it = objects_.find(h);
  if (it == objects_.end()) throw Error(Errc::unknown_object, "no object " + std::to_string(h));
  return it->second;
}

std::vector<Handle> StoreEngine::list_objects(const Ciphertext& class_tag) const {
  std::shared_lock lock(mu_);
  std::vector<Handle> out;
  for (const auto& [h, obj] : objects_) {
    if (obj.class_tag.column == class_tag.column && obj.class_tag.bytes == class_tag.bytes) {
      out.push_back(h);
    }
  }
  return out;
}

TxnStatus StoreEngine::txn_status(std::uint64_t txn) const {
  std::shared_lock lock(mu_);
  auto it = txns_.find(txn);
  if (it == txns_.end()) return {};
  return TxnStatus{true, it->second};
}

std::vector<LogEntry> StoreEngine::log() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

std::size_t StoreEngine::table_count() const {
  std::shared_lock lock(mu_);
  return tables_.size();
}

std::size_t StoreEngine::row_count(const TableId& t) const {
  std::shared_lock lock(mu_);
  return table(t).rows.size();
}

std::size_t StoreEngine::object_count() const {
  std::shared_lock lock(mu_);
  return objects_.size();
}

}  // namespace healthvault::store
