#include "healthvault/store/client.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include "healthvault/store/server.hpp"

namespace healthvault::store {

std::string LoopbackTransport::roundtrip(std::string_view request) {
  if (!available_) throw Error(Errc::store_unavailable, "store is unreachable");
  if (hook_) hook_(request);
  return engine_->handle(request);
}

SocketTransport::SocketTransport(std::string host, std::uint16_t port, int timeout_ms)
    : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms) {}

SocketTransport::~SocketTransport() {
  std::lock_guard lock(mu_);
  close_locked();
}

void SocketTransport::close_locked() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void SocketTransport::connect_locked() {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string port = std::to_string(port_);
  if (::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::store_unavailable, "cannot resolve store host " + host_);
  }
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    timeval tv{timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw Error(Errc::store_unavailable, "cannot connect to store at " + host_ + ":" + port);
}

std::string SocketTransport::roundtrip(std::string_view request) {
  std::lock_guard lock(mu_);
  if (fd_ < 0) connect_locked();
  try {
    write_frame(fd_, request);
    std::string body;
    if (!read_frame(fd_, body)) throw Error(Errc::store_unavailable, "store closed the connection");
    return body;
  } catch (const Error& e) {
    close_locked();
    if (e.code() == Errc::protocol_error) throw;
    throw Error(Errc::store_unavailable, e.what());
  }
}

std::shared_ptr<Transport> open_transport(const std::string& spec) {
  if (spec == "memory:" || spec == "memory") {
    return std::make_shared<LoopbackTransport>(std::make_shared<StoreEngine>());
  }
  if (spec.rfind("local:", 0) == 0) {
    EngineOptions o;
    o.data_dir = spec.substr(6);
    if (o.data_dir.empty()) throw Error(Errc::invalid_argument, "local store needs a directory");
    return std::make_shared<LoopbackTransport>(std::make_shared<StoreEngine>(o));
  }
  if (spec.rfind("tcp:", 0) == 0) {
    auto rest = spec.substr(4);
    auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::invalid_argument, "tcp store needs host:port");
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      port = -1;
    }
    if (port <= 0 || port > 65535) throw Error(Errc::invalid_argument, "bad store port in " + spec);
    return std::make_shared<SocketTransport>(rest.substr(0, colon), static_cast<std::uint16_t>(port));
  }
  throw Error(Errc::invalid_argument, "unknown store spec " + spec);
}

// ---- client ----------------------------------------------------------------

std::string StoreClient::call(MessageKind kind, const ByteWriter& payload) {
  std::string req(1, static_cast<char>(kind));
  req += payload.str();
  std::string resp = transport_->roundtrip(req);
  return std::string(unwrap_response(resp));
}

void StoreClient::ping() { call(MessageKind::ping, {}); }

void StoreClient::create_table(const TableId& table, const std::vector<ColumnSpec>& columns) {
  ByteWriter w;
  w.raw(table.view());
  write_columns(w, columns);
  call(MessageKind::create_table, w);
}

std::vector<Handle> StoreClient::put_rows(const TableId& table,
                                          const std::vector<EncryptedRow>& rows) {
  ByteWriter w;
  w.raw(table.view());
  write_rows(w, rows);
  auto resp = call(MessageKind::put_rows, w);
  ByteReader r(resp);
  return read_handles(r);
}

void StoreClient::replace_rows(const TableId& table, const std::vector<EncryptedRow>& rows) {
  ByteWriter w;
  w.raw(table.view());
  write_rows(w, rows);
  call(MessageKind::replace_rows, w);
}

Handle StoreClient::put_object(const EncryptedObject& obj) {
  ByteWriter w;
  write_object(w, obj);
  auto resp = call(MessageKind::put_object, w);
  ByteReader r(resp);
  return r.u64();
}

std::vector<std::vector<Handle>> StoreClient::commit_batch(std::uint64_t txn,
                                                           const std::vector<BatchOp>& ops) {
  ByteWriter w;
  w.u64(txn);
  w.u32(static_cast<std::uint32_t>(ops.size()));
  for (const auto& op : ops) write_batch_op(w, op);
  auto resp = call(MessageKind::commit_batch, w);
  ByteReader r(resp);
  std::vector<std::vector<Handle>> out(r.u32());
  for (auto& hs : out) hs = read_handles(r);
  return out;
}

TxnStatus StoreClient::txn_status(std::uint64_t txn) {
  ByteWriter w;
  w.u64(txn);
  auto resp = call(MessageKind::txn_status, w);
  ByteReader r(resp);
  TxnStatus st;
  st.committed = r.u8() != 0;
  st.handles.resize(r.u32());
  for (auto& hs : st.handles) hs = read_handles(r);
  return st;
}

std::vector<EncryptedRow> StoreClient::scan_point(const TableId& table, const Ciphertext& key) {
  ByteWriter w;
  w.raw(table.view());
  w.raw(key.column.view());
  write_ciphertext(w, key);
  auto resp = call(MessageKind::scan_point, w);
  ByteReader r(resp);
  return read_rows(r);
}

std::vector<EncryptedRow> StoreClient::scan_range(const TableId& table, const Ciphertext& lo,
                                                  const Ciphertext& hi) {
  ByteWriter w;
  w.raw(table.view());
  w.raw(lo.column.view());
  write_ciphertext(w, lo);
  write_ciphertext(w, hi);
  auto resp = call(MessageKind::scan_range, w);
  ByteReader r(resp);
  return read_rows(r);
}

std::vector<EncryptedRow> StoreClient::scan_all(const TableId& table) {
  ByteWriter w;
  w.raw(table.view());
  auto resp = call(MessageKind::scan_all, w);
  ByteReader r(resp);
  return read_rows(r);
}

std::vector<EncryptedRow> StoreClient::get_rows(const TableId& table,
                                                const std::vector<Handle>& handles) {
  ByteWriter w;
  w.raw(table.view());
  write_handles(w, handles);
  auto resp = call(MessageKind::get_rows, w);
  ByteReader r(resp);
  return read_rows(r);
}

EncryptedObject StoreClient::get_object(Handle h) {
  ByteWriter w;
  w.u64(h);
  auto resp = call(MessageKind::get_object, w);
  ByteReader r(resp);
  return read_object(r);
}

std::vector<Handle> StoreClient::list_objects(const Ciphertext& class_tag) {
  ByteWriter w;
  write_ciphertext(w, class_tag);
  auto resp = call(MessageKind::list_objects, w);
  ByteReader r(resp);
  return read_handles(r);
}

std::vector<LogEntry> StoreClient::dump_log() {
  auto resp = call(MessageKind::dump_log, {});
  ByteReader r(resp);
  std::vector<LogEntry> out(r.u32());
  for (auto& e : out) {
    e.kind = static_cast<MessageKind>(r.u8());
    e.timestamp_ms = r.u64();
    e.body = r.bytes();
  }
  return out;
}

}  // namespace healthvault::store
