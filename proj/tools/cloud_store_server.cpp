// Untrusted storage service speaking the framed binary protocol over TCP.
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "healthvault/store/server.hpp"

using namespace healthvault::store;

namespace {
StoreServer* g_server = nullptr;
void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Encrypted table and object store"};
  std::string host = "127.0.0.1";
  std::uint16_t port = 7070;
  std::string data_dir;
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port)->capture_default_str();
  app.add_option("--data", data_dir, "Segment directory (default: memory only)");
  CLI11_PARSE(app, argc, argv);

  EngineOptions opts;
  opts.data_dir = data_dir;
  StoreEngine engine(opts);
  StoreServer server(engine, host, port);
  server.start();
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "store listening on " << host << ":" << server.port() << "\n";
  server.wait();
  return 0;
}
