#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "healthvault/store/engine.hpp"
#include "healthvault/store/protocol.hpp"

namespace healthvault::store {

// Carries one request body to the store and returns the response body.
// Throws StoreUnavailable when the store cannot be reached.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string roundtrip(std::string_view request) = 0;
};

// In-process transport. Can be switched off to simulate an outage.
class LoopbackTransport : public Transport {
 public:
  explicit LoopbackTransport(std::shared_ptr<StoreEngine> engine) : engine_(std::move(engine)) {}

  std::string roundtrip(std::string_view request) override;

  void set_available(bool up) { available_ = up; }
  // Called with every request before it is delivered; a throwing hook
  // aborts delivery.
  void set_hook(std::function<void(std::string_view)> hook) { hook_ = std::move(hook); }
  StoreEngine& engine() { return *engine_; }
  std::shared_ptr<StoreEngine> shared_engine() const { return engine_; }

 private:
  std::shared_ptr<StoreEngine> engine_;
  std::atomic<bool> available_{true};
  std::function<void(std::string_view)> hook_;
};

// TCP transport with one lazily (re)opened connection.
class SocketTransport : public Transport {
 public:
  SocketTransport(std::string host, std::uint16_t port, int timeout_ms = 10000);
  ~SocketTransport() override;

  std::string roundtrip(std::string_view request) override;

 private:
  void connect_locked();
  void close_locked();

  std::string host_;
  std::uint16_t port_;
  int timeout_ms_;
  std::mutex mu_;
  int fd_ = -1;
};

// "local:<dir>" (in-process engine persisted under dir), "memory:" or
// "tcp:<host>:<port>".
std::shared_ptr<Transport> open_transport(const std::string& spec);

// Typed calls over a transport.
class StoreClient {
 public:
  explicit StoreClient(std::shared_ptr<Transport> transport) : transport_(std::move(transport)) {}

  void ping();
  void create_table(const TableId& table, const std::vector<ColumnSpec>& columns);
  std::vector<Handle> put_rows(const TableId& table, const std::vector<EncryptedRow>& rows);
  void replace_rows(const TableId& table, const std::vector<EncryptedRow>& rows);
  Handle put_object(const EncryptedObject& obj);
  std::vector<std::vector<Handle>> commit_batch(std::uint64_t txn, const std::vector<BatchOp>& ops);
  TxnStatus txn_status(std::uint64_t txn);

  std::vector<EncryptedRow> scan_point(const TableId& table, const Ciphertext& key);
  std::vector<EncryptedRow> scan_range(const TableId& table, const Ciphertext& lo,
                                       const Ciphertext& hi);
  std::vector<EncryptedRow> scan_all(const TableId& table);
  std::vector<EncryptedRow> get_rows(const TableId& table, const std::vector<Handle>& handles);
  EncryptedObject get_object(Handle h);
  std::vector<Handle> list_objects(const Ciphertext& class_tag);
  std::vector<LogEntry> dump_log();

  Transport& transport() { return *transport_; }

 private:
  std::string call(MessageKind kind, const ByteWriter& payload);

  std::shared_ptr<Transport> transport_;
};

}  // namespace healthvault::store
