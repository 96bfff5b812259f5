#include "healthvault/store/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace healthvault::store {

namespace {

bool read_exact(int fd, char* buf, std::size_t n, bool allow_eof) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t k = ::recv(fd, buf + got, n - got, 0);
    if (k < 0 && errno == EINTR) continue;
    if (k == 0 && got == 0 && allow_eof) return false;
    if (k <= 0) throw Error(Errc::store_unavailable, "connection closed mid-frame");
    got += static_cast<std::size_t>(k);
  }
  return true;
}

}  // namespace

bool read_frame(int fd, std::string& body, std::uint32_t max_bytes) {
  char header[4];
  if (!read_exact(fd, header, 4, true)) return false;
  ByteReader r(std::string_view(header, 4));
  std::uint32_t len = r.u32();
  if (len > max_bytes) throw Error(Errc::protocol_error, "frame too large");
  body.resize(len);
  if (len > 0) read_exact(fd, body.data(), len, false);
  return true;
}

void write_frame(int fd, std::string_view body) {
  std::string data = frame(body);
  std::string_view rest = data;
  while (!rest.empty()) {
    ssize_t k = ::send(fd, rest.data(), rest.size(), MSG_NOSIGNAL);
    if (k < 0 && errno == EINTR) continue;
    if (k <= 0) throw Error(Errc::store_unavailable, "connection closed while sending");
    rest.remove_prefix(static_cast<std::size_t>(k));
  }
}

StoreServer::StoreServer(StoreEngine& engine, std::string host, std::uint16_t port)
    : engine_(engine), host_(std::move(host)), port_(port) {}

StoreServer::~StoreServer() { stop(); }

void StoreServer::start() {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  std::string port_str = std::to_string(port_);
  if (::getaddrinfo(host_.c_str(), port_str.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::invalid_argument, "cannot resolve " + host_);
  }
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (listen_fd_ < 0 || ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(Errc::store_unavailable, "cannot listen on " + host_ + ":" + port_str + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_storage addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void StoreServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    int rc = ::poll(&p, 1, 100);
    if (rc <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    clients_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void StoreServer::serve(int fd) {
  try {
    std::string body;
    while (running_ && read_frame(fd, body)) write_frame(fd, engine_.handle(body));
  } catch (const std::exception&) {
  }
  ::shutdown(fd, SHUT_RDWR);
}

void StoreServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  for (int fd : clients_) ::close(fd);
  clients_.clear();
  ::close(listen_fd_);
  listen_fd_ = -1;
}

void StoreServer::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

}  // namespace healthvault::store
