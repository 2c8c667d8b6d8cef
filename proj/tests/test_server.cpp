#include "objsearch/hub.hpp"
#include "objsearch/server.hpp"

#include "support.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/read_until.hpp>
#include <boost/asio/streambuf.hpp>
#include <boost/asio/write.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace objsearch;
using namespace objsearch::testing;
namespace asio = boost::asio;
namespace websocket = boost::beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class ServerTest : public ::testing::Test {
protected:
  void SetUp() override {
    console_ = std::filesystem::temp_directory_path() / ("objsearch_console_" + std::to_string(::getpid()));
    std::filesystem::create_directories(console_ / "js");
    std::ofstream(console_ / "index.html") << "<html>console</html>";
    std::ofstream(console_ / "js" / "app.js") << "console.log(1);";
    HubOptions o;
    o.scenes_dir = fixture("scenes");
    o.make_backend = [] { return std::make_shared<MockFeedbackBackend>(); };
    hub_ = std::make_unique<SessionHub>(o);
    ServerOptions so;
    so.console_dir = console_;
    server_ = std::make_unique<Server>(*hub_, so);
    server_->start();
  }
  void TearDown() override {
    server_->stop();
    hub_->shutdown();
    std::filesystem::remove_all(console_);
  }

  std::filesystem::path console_;
  std::unique_ptr<SessionHub> hub_;
  std::unique_ptr<Server> server_;
};

/// Reads lines until one has the given type (and state, when given).
Json read_until_type(tcp::socket &sock, asio::streambuf &buf, const std::string &type,
                     const std::string &state = "") {
  for (int i = 0; i < 200; ++i) {
    asio::read_until(sock, buf, '\n');
    std::istream is(&buf);
    std::string line;
    std::getline(is, line);
    Json j = parse_json(line, "line");
    if (j.at("type") == type && (state.empty() || j.value("state", "") == state)) return j;
  }
  return Json();
}

Json ws_read_until_type(websocket::stream<tcp::socket> &ws, const std::string &type,
                        const std::string &state = "") {
  for (int i = 0; i < 200; ++i) {
    boost::beast::flat_buffer buf;
    ws.read(buf);
    Json j = parse_json(boost::beast::buffers_to_string(buf.data()), "message");
    if (j.at("type") == type && (state.empty() || j.value("state", "") == state)) return j;
  }
  return Json();
}

} // namespace

TEST_F(ServerTest, NdjsonSession) {
  asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({asio::ip::make_address("127.0.0.1"), server_->port()});
  asio::write(sock, asio::buffer(std::string(R"({"type":"create_session","scene":"office"})") + "\n"));
  asio::streambuf buf;
  const Json created = read_until_type(sock, buf, "session_created");
  const std::string id = created.at("session_id");
  const std::string lines = R"({"type":"send_event","session_id":")" + id +
                            R"(","event":{"type":"utterance","text":"Find office chair"}})" + "\n";
  asio::write(sock, asio::buffer(lines));
  const Json state = read_until_type(sock, buf, "state_changed", "confirm_target");
  EXPECT_EQ(state.at("session_id"), id);
}

TEST_F(ServerTest, WebSocketSession) {
  asio::io_context ioc;
  websocket::stream<tcp::socket> ws(ioc);
  ws.next_layer().connect({asio::ip::make_address("127.0.0.1"), server_->port()});
  ws.handshake("127.0.0.1", "/session");
  ws.text(true);
  ws.write(asio::buffer(std::string(R"({"type":"create_session","scene":"office"})")));
  const Json created = ws_read_until_type(ws, "session_created");
  const std::string id = created.at("session_id");
  ws.write(asio::buffer(R"({"type":"send_event","session_id":")" + id +
                        R"(","event":{"type":"utterance","text":"Find office chair"}})"));
  EXPECT_EQ(ws_read_until_type(ws, "state_changed", "confirm_target").at("session_id"), id);
  ws.write(asio::buffer(std::string("garbage")));
  EXPECT_EQ(ws_read_until_type(ws, "error").at("code"), "bad_message");
  ws.close(websocket::close_code::normal);
}

TEST_F(ServerTest, ServesConsoleAndHealth) {
  httplib::Client c("127.0.0.1", server_->port());
  auto r = c.Get("/console/");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>console</html>");
  r = c.Get("/console/js/app.js");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_NE(r->get_header_value("Content-Type").find("javascript"), std::string::npos);
  r = c.Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->body.substr(0, 2), "ok");
}

TEST_F(ServerTest, RejectsUnknownAndEscapingPaths) {
  httplib::Client c("127.0.0.1", server_->port());
  auto r = c.Get("/nothing");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);
  r = c.Get("/console/missing.css");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);
  r = c.Get("/console/../CMakeCache.txt");
  ASSERT_TRUE(r);
  EXPECT_NE(r->status, 200);
}

TEST_F(ServerTest, DisconnectDropsSubscriber) {
  std::string id;
  {
    asio::io_context ioc;
    tcp::socket sock(ioc);
    sock.connect({asio::ip::make_address("127.0.0.1"), server_->port()});
    asio::write(sock, asio::buffer(std::string(R"({"type":"create_session","scene":"office"})") + "\n"));
    asio::streambuf buf;
    id = read_until_type(sock, buf, "session_created").at("session_id");
  }
  // The session outlives its connection and accepts a new subscriber.
  asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({asio::ip::make_address("127.0.0.1"), server_->port()});
  asio::write(sock, asio::buffer(R"({"type":"subscribe","session_id":")" + id + "\"}\n" +
                                 R"({"type":"send_event","session_id":")" + id + R"(","event":{"type":"button_b"}})" +
                                 "\n"));
  asio::streambuf buf;
  EXPECT_EQ(read_until_type(sock, buf, "world_snapshot").at("session_id"), id);
}
