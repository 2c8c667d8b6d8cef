#include "objsearch/hub.hpp"

#include "objsearch/error.hpp"

#include <algorithm>
#include <chrono>
#include <stop_token>

namespace objsearch {

Outbox::Outbox(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

bool Outbox::push(std::string line) {
  std::function<void()> notify;
  bool accepted = false;
  {
    std::lock_guard lock(mu_);
    if (closed_) return false;
    if (overflowed_ && queue_.empty()) overflowed_ = false;
    if (overflowed_ || queue_.size() >= capacity_) {
      ++dropped_;
      if (!overflowed_) {
        overflowed_ = true;
        queue_.push_back(to_json(server_msg::Error{error_code::kSubscriberOverflow,
                                                   "outgoing queue full, messages dropped", std::nullopt})
                             .dump());
        notify = notify_;
      }
    } else {
      queue_.push_back(std::move(line));
      notify = notify_;
      accepted = true;
    }
  }
  if (notify) notify();
  return accepted;
}

std::optional<std::string> Outbox::pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  std::string line = std::move(queue_.front());
  queue_.pop_front();
  return line;
}

std::size_t Outbox::size() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

std::size_t Outbox::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void Outbox::set_notify(std::function<void()> notify) {
  std::lock_guard lock(mu_);
  notify_ = std::move(notify);
}

void Outbox::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  notify_ = nullptr;
}

bool Outbox::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

void send(const OutboxPtr &conn, const ServerMessage &m) {
  if (conn) conn->push(to_json(m).dump());
}

struct SessionHub::Hosted {
  std::string id;
  std::mutex mu;
  std::unique_ptr<Runner> runner;
  std::vector<std::weak_ptr<Outbox>> subscribers;
  std::ofstream transcript;
  std::jthread ticker;
  bool closed = false;

  void subscribe(const OutboxPtr &conn) {
    for (const auto &w : subscribers) {
      if (w.lock() == conn) return;
    }
    subscribers.push_back(conn);
  }

  void broadcast(const ServerMessage &m) {
    const std::string line = to_json(m).dump();
    std::erase_if(subscribers, [&](const std::weak_ptr<Outbox> &w) {
      auto conn = w.lock();
      if (!conn || conn->closed()) return true;
      conn->push(line);
      return false;
    });
  }
};

SessionHub::SessionHub(HubOptions options) : options_(std::move(options)) {
  validate(options_.base_config);
  if (!options_.sessions_dir.empty()) std::filesystem::create_directories(options_.sessions_dir);
}

SessionHub::~SessionHub() { shutdown(); }

void SessionHub::shutdown() {
  std::map<std::string, std::shared_ptr<Hosted>> sessions;
  {
    std::lock_guard lock(mu_);
    sessions.swap(sessions_);
  }
  for (auto &[id, h] : sessions) {
    h->ticker.request_stop();
    if (h->ticker.joinable()) h->ticker.join();
  }
}

std::size_t SessionHub::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::shared_ptr<SessionHub::Hosted> SessionHub::find(const std::string &id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ScenePtr SessionHub::scene(const std::string &name) {
  const bool safe = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
  if (!safe) return nullptr;
  std::lock_guard lock(mu_);
  if (auto it = scenes_.find(name); it != scenes_.end()) return it->second;
  const auto path = options_.scenes_dir / (name + ".json");
  if (!std::filesystem::exists(path)) return nullptr;
  auto scene = std::make_shared<const Scene>(load_scene_file(path.string()));
  scenes_[name] = scene;
  return scene;
}

void SessionHub::handle_line(std::string_view line, const OutboxPtr &conn) {
  if (trim(line).empty()) return;
  ClientMessage message;
  try {
    message = client_message_from_json(parse_json(line, "message"));
  } catch (const ParseError &e) {
    send(conn, server_msg::Error{error_code::kBadMessage, e.what(), std::nullopt});
    return;
  }
  handle(message, conn);
}

void SessionHub::handle(const ClientMessage &message, const OutboxPtr &conn) {
  try {
    if (const auto *c = std::get_if<client_msg::CreateSession>(&message)) {
      create(*c, conn);
      return;
    }
    const std::string id = std::visit(
        [](const auto &m) -> std::string {
          if constexpr (requires { m.session_id; }) return m.session_id;
          else return {};
        },
        message);
    if (const auto *c = std::get_if<client_msg::Close>(&message)) {
      close(c->session_id, conn);
      return;
    }
    auto h = find(id);
    if (!h) {
      send(conn, server_msg::Error{error_code::kUnknownSession, "no session '" + id + "'", id});
      return;
    }
    std::lock_guard lock(h->mu);
    if (h->closed) {
      send(conn, server_msg::Error{error_code::kUnknownSession, "session '" + id + "' is closed", id});
      return;
    }
    if (std::holds_alternative<client_msg::Subscribe>(message)) {
      h->subscribe(conn);
      send(conn, server_msg::StateChanged{id, tag_of(h->runner->session().state), h->runner->session().now_s()});
      send(conn, make_world_snapshot(id, h->runner->session()));
      return;
    }
    send_event(*h, std::get<client_msg::SendEvent>(message).event, conn);
  } catch (const std::exception &e) {
    send(conn, server_msg::Error{error_code::kInternal, e.what(), std::nullopt});
  }
}

void SessionHub::create(const client_msg::CreateSession &m, const OutboxPtr &conn) {
  ScenePtr sc;
  try {
    sc = scene(m.scene);
  } catch (const Error &e) {
    send(conn, server_msg::Error{error_code::kUnknownScene, e.what(), std::nullopt});
    return;
  }
  if (!sc) {
    send(conn, server_msg::Error{error_code::kUnknownScene, "no scene '" + m.scene + "'", std::nullopt});
    return;
  }
  Config config;
  CameraPose start;
  if (sc->start_pose) start = *sc->start_pose;
  else start.position = sc->bounds.center();
  try {
    config = config_from_json(m.config, options_.base_config);
    validate(config);
    if (m.start_pose) start = pose_from_json(*m.start_pose, start, "start_pose");
  } catch (const Error &e) {
    send(conn, server_msg::Error{error_code::kInvalidConfig, e.what(), std::nullopt});
    return;
  }

  auto h = std::make_shared<Hosted>();
  try {
    h->runner = std::make_unique<Runner>(sc, start, config,
                                         options_.make_backend ? options_.make_backend() : nullptr,
                                         options_.embedder);
  } catch (const Error &e) {
    send(conn, server_msg::Error{error_code::kInvalidConfig, e.what(), std::nullopt});
    return;
  }
  {
    std::lock_guard lock(mu_);
    h->id = "s" + std::to_string(++next_id_);
    sessions_[h->id] = h;
  }
  std::lock_guard lock(h->mu);
  if (!options_.sessions_dir.empty()) {
    h->transcript.open(options_.sessions_dir / (h->id + ".jsonl"), std::ios::app);
  }
  h->subscribe(conn);
  const Session &s = h->runner->session();
  h->broadcast(server_msg::SessionCreated{h->id, tag_of(s.state), s.vocab.labels()});
  publish(*h, h->runner->transcript(), StateTag::Initializing);

  if (m.auto_tick_hz > 0) {
    const double period = 1.0 / m.auto_tick_hz;
    std::weak_ptr<Hosted> weak = h;
    h->ticker = std::jthread([this, weak, period](std::stop_token stop) {
      std::mutex wait_mu;
      std::condition_variable_any cv;
      const auto interval = std::chrono::duration<double>(period);
      while (!stop.stop_requested()) {
        {
          std::unique_lock wl(wait_mu);
          if (cv.wait_for(wl, stop, interval, [] { return false; })) break;
        }
        if (stop.stop_requested()) break;
        auto hosted = weak.lock();
        if (!hosted) break;
        std::lock_guard lock(hosted->mu);
        if (hosted->closed) break;
        const StateTag before = tag_of(hosted->runner->session().state);
        publish(*hosted, hosted->runner->submit(event::Tick{period}, "clock"), before);
      }
    });
  }
}

void SessionHub::send_event(Hosted &h, const Json &event_json, const OutboxPtr &conn) {
  Event event;
  try {
    event = event_from_json(event_json, h.runner->session().pose);
  } catch (const ParseError &e) {
    send(conn, server_msg::Error{error_code::kInvalidEvent, e.what(), h.id});
    return;
  }
  const StateTag before = tag_of(h.runner->session().state);
  publish(h, h.runner->submit(event, "client"), before);
}

void SessionHub::publish(Hosted &h, const std::vector<TranscriptRecord> &records, StateTag previous) {
  if (records.empty()) return;
  if (h.transcript.is_open()) {
    h.transcript << transcript_to_jsonl(records);
    h.transcript.flush();
  }
  for (const auto &m : messages_for(h.id, records, previous)) h.broadcast(m);
  h.broadcast(make_world_snapshot(h.id, h.runner->session()));
}

void SessionHub::close(const std::string &id, const OutboxPtr &conn) {
  std::shared_ptr<Hosted> h;
  {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it != sessions_.end()) {
      h = it->second;
      sessions_.erase(it);
    }
  }
  if (!h) {
    send(conn, server_msg::Error{error_code::kUnknownSession, "no session '" + id + "'", id});
    return;
  }
  h->ticker.request_stop();
  if (h->ticker.joinable() && h->ticker.get_id() != std::this_thread::get_id()) h->ticker.join();
  std::lock_guard lock(h->mu);
  h->closed = true;
  h->subscribe(conn);
  h->broadcast(server_msg::SessionClosed{id});
  h->subscribers.clear();
}

void SessionHub::disconnect(const OutboxPtr &conn) {
  std::vector<std::shared_ptr<Hosted>> all;
  {
    std::lock_guard lock(mu_);
    for (auto &[id, h] : sessions_) all.push_back(h);
  }
  for (auto &h : all) {
    std::lock_guard lock(h->mu);
    std::erase_if(h->subscribers, [&](const std::weak_ptr<Outbox> &w) {
      auto c = w.lock();
      return !c || c == conn;
    });
  }
  if (conn) conn->close();
}

} // namespace objsearch
