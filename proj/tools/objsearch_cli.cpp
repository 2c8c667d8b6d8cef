#include "objsearch/error.hpp"
#include "objsearch/eval.hpp"
#include "objsearch/hub.hpp"
#include "objsearch/remote.hpp"
#include "objsearch/runner.hpp"
#include "objsearch/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <sstream>

using namespace objsearch;

namespace {

void write_file(const std::string &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << bytes;
  if (!out.flush()) throw Error("write failed for '" + path + "'");
}

Config load_config(const std::string &path) {
  if (path.empty()) return {};
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error &e) {
    throw ParseError(path + ": " + e.what());
  }
  return config_from_json(j);
}

struct Backends {
  std::string feedback_url;
  std::string embedding_url;
  double timeout_s = 30;

  Endpoint feedback() const {
    return endpoint_with_env(Endpoint{feedback_url, "", timeout_s}, kFeedbackEndpointEnv, kFeedbackTokenEnv);
  }
  Endpoint embedding() const {
    return endpoint_with_env(Endpoint{embedding_url, "", timeout_s}, kEmbeddingEndpointEnv, kEmbeddingTokenEnv);
  }

  std::shared_ptr<FeedbackBackend> make_feedback() const {
    const Endpoint e = feedback();
    if (e.url.empty()) return std::make_shared<MockFeedbackBackend>();
    return std::make_shared<RemoteFeedbackBackend>(e);
  }
  std::shared_ptr<const EmbeddingProvider> make_embedder() const {
    const Endpoint e = embedding();
    if (e.url.empty()) return nullptr;
    return std::make_shared<RemoteEmbeddingProvider>(e);
  }
};

int serve(const ServerOptions &server_options, const HubOptions &hub_options) {
  // Handle SIGINT/SIGTERM synchronously on the main thread; worker threads
  // inherit the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionHub hub(hub_options);
  Server server(hub, server_options);
  server.start();
  std::cout << "listening on " << server_options.host << ":" << server.port() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "shutting down\n";
  server.stop();
  hub.shutdown();
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Egocentric object search simulator"};
  app.require_subcommand(1);
  std::string config_path;
  Backends backends;
  app.add_option("--config", config_path, "Session config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--feedback-url", backends.feedback_url, "Remote feedback endpoint; mock when unset");
  app.add_option("--embedding-url", backends.embedding_url, "Remote embedding endpoint; trigram when unset");
  app.add_option("--backend-timeout", backends.timeout_s, "Remote request timeout, seconds");

  ServerOptions server_options;
  HubOptions hub_options;
  std::string console_dir, sessions_dir, scenes_dir;
  auto *serve_cmd = app.add_subcommand("serve", "Host sessions over NDJSON and WebSocket");
  serve_cmd->add_option("--host", server_options.host, "Listen address");
  serve_cmd->add_option("--port", server_options.port, "Listen port (0 picks one)");
  serve_cmd->add_option("--scenes", scenes_dir, "Directory of <name>.json scenes")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--sessions", sessions_dir, "Directory for session transcripts");
  serve_cmd->add_option("--console", console_dir, "Static console files served under /console");
  serve_cmd->add_option("--threads", server_options.threads, "I/O threads");
  serve_cmd->add_option("--outbox", server_options.outbox_capacity, "Per-connection outgoing message limit");

  std::string scene_path, script_path, episodes_path, out_path, transcript_path;
  auto *replay_cmd = app.add_subcommand("replay", "Run a script and write its transcript");
  replay_cmd->add_option("scene", scene_path)->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("script", script_path)->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--out", out_path, "Transcript file; stdout when unset");

  auto *eval_cmd = app.add_subcommand("eval", "Run search episodes and report metrics");
  eval_cmd->add_option("scene", scene_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("episodes", episodes_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", out_path, "Report file; stdout when unset");

  auto *verify_cmd = app.add_subcommand("verify", "Check that a transcript replays exactly");
  verify_cmd->add_option("scene", scene_path)->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("transcript", transcript_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    const Config config = load_config(config_path);
    auto emit = [&](const std::string &bytes) {
      if (out_path.empty()) std::cout << bytes;
      else write_file(out_path, bytes);
    };

    if (*serve_cmd) {
      hub_options.scenes_dir = scenes_dir;
      hub_options.sessions_dir = sessions_dir;
      hub_options.base_config = config;
      hub_options.make_backend = [backends] { return backends.make_feedback(); };
      hub_options.embedder = backends.make_embedder();
      server_options.console_dir = console_dir;
      return serve(server_options, hub_options);
    }
    if (*replay_cmd) {
      auto scene = std::make_shared<const Scene>(load_scene_file(scene_path));
      const Script script = load_script_file(script_path);
      emit(transcript_to_jsonl(run_script(scene, script, config, backends.make_feedback())));
      return 0;
    }
    if (*eval_cmd) {
      auto scene = std::make_shared<const Scene>(load_scene_file(scene_path));
      const auto episodes = load_episodes_file(episodes_path);
      emit(report_to_json(evaluate(scene, episodes, config)).dump(2) + "\n");
      return 0;
    }
    if (*verify_cmd) {
      auto scene = std::make_shared<const Scene>(load_scene_file(scene_path));
      const auto records = transcript_from_jsonl(read_file(transcript_path));
      if (auto mismatch = verify_replay(scene, records)) {
        std::cerr << "mismatch at record " << mismatch->index << ": " << mismatch->detail << "\n";
        return 1;
      }
      std::cout << "ok: " << records.size() << " records replay exactly\n";
      return 0;
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
