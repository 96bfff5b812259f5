#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "healthvault/store/engine.hpp"

namespace healthvault::store {

// Serves framed requests over TCP, one thread per connection.
class StoreServer {
 public:
  StoreServer(StoreEngine& engine, std::string host = "127.0.0.1", std::uint16_t port = 0);
  ~StoreServer();
  StoreServer(const StoreServer&) = delete;
  StoreServer& operator=(const StoreServer&) = delete;

  // Binds and starts accepting in the background. Port 0 picks a free port.
  void start();
  std::uint16_t port() const { return port_; }
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

 private:
  void accept_loop();
  void serve(int fd);

  StoreEngine& engine_;
  std::string host_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<int> clients_;
  std::vector<std::thread> workers_;
};

// Reads one frame; returns false on a clean EOF before the header.
bool read_frame(int fd, std::string& body, std::uint32_t max_bytes = 1u << 30);
void write_frame(int fd, std::string_view body);

}  // namespace healthvault::store
