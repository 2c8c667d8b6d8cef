#pragma once

#include "objsearch/protocol.hpp"
#include "objsearch/runner.hpp"

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace objsearch {

/// Per-connection bounded queue of outgoing lines. When full, messages are
/// dropped and a single subscriber_overflow error is queued in their place;
/// delivery resumes once the reader drains the queue.
class Outbox {
public:
  explicit Outbox(std::size_t capacity = 1024);

  /// Returns false when the message was dropped.
  bool push(std::string line);
  std::optional<std::string> pop();
  std::size_t size() const;
  std::size_t dropped() const;

  /// Called after each successful push, without the lock held.
  void set_notify(std::function<void()> notify);
  void close();
  bool closed() const;

private:
  mutable std::mutex mu_;
  std::deque<std::string> queue_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
  bool overflowed_ = false;
  bool closed_ = false;
  std::function<void()> notify_;
};

using OutboxPtr = std::shared_ptr<Outbox>;

struct HubOptions {
  std::filesystem::path scenes_dir;
  /// Transcripts are appended here as <session_id>.jsonl; empty disables.
  std::filesystem::path sessions_dir;
  Config base_config;
  std::function<std::shared_ptr<FeedbackBackend>()> make_backend;
  std::shared_ptr<const EmbeddingProvider> embedder;
};

/// Hosts live sessions and routes client messages to them. Messages of one
/// session reach every subscriber in emission order.
class SessionHub {
public:
  explicit SessionHub(HubOptions options);
  ~SessionHub();
  SessionHub(const SessionHub &) = delete;
  SessionHub &operator=(const SessionHub &) = delete;

  /// Parses and handles one line from `conn`; replies go to `conn`.
  void handle_line(std::string_view line, const OutboxPtr &conn);
  void handle(const ClientMessage &message, const OutboxPtr &conn);

  /// Drops the connection from every subscriber list.
  void disconnect(const OutboxPtr &conn);

  std::size_t session_count() const;
  void shutdown();

private:
  struct Hosted;

  std::shared_ptr<Hosted> find(const std::string &id) const;
  ScenePtr scene(const std::string &name);
  void create(const client_msg::CreateSession &m, const OutboxPtr &conn);
  void send_event(Hosted &h, const Json &event, const OutboxPtr &conn);
  void publish(Hosted &h, const std::vector<TranscriptRecord> &records, StateTag previous);
  void close(const std::string &id, const OutboxPtr &conn);

  HubOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Hosted>> sessions_;
  std::map<std::string, ScenePtr> scenes_;
  std::uint64_t next_id_ = 0;
};

void send(const OutboxPtr &conn, const ServerMessage &m);

} // namespace objsearch
