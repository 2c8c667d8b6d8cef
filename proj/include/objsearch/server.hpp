#pragma once

#include "objsearch/hub.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace objsearch {

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0; // 0 picks a free port
  /// Static files served under /console; empty disables.
  std::filesystem::path console_dir;
  int threads = 0; // 0: hardware concurrency, at least 2
  std::size_t outbox_capacity = 1024;
};

/// Accepts newline-delimited JSON on a plain socket and the same protocol
/// over a WebSocket upgrade at /session, both on one port.
class Server {
public:
  Server(SessionHub &hub, ServerOptions options);
  ~Server();
  Server(const Server &) = delete;
  Server &operator=(const Server &) = delete;

  /// Binds and starts the worker threads. Throws Error on bind failure.
  void start();
  std::uint16_t port() const;
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace objsearch
