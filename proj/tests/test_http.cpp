#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pfp/chat.hpp"
#include "pfp/error.hpp"
#include "pfp/http_provider.hpp"

using namespace pfp;

namespace {

// In-process chat-completion endpoint speaking the wire schema the client
// expects; echoes enough of the request to assert on.
struct LocalServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  LocalServer() {
    server.Post("/v1/chat/completions",
                [](const httplib::Request& req, httplib::Response& res) {
                  const auto body = nlohmann::json::parse(req.body);
                  std::string who = "none";
                  std::string text;
                  for (const auto& m : body.at("messages")) {
                    if (m.at("role") == "system") who = "sys";
                    if (m.at("role") == "user")
                      text = m.at("content").get<std::string>();
                  }
                  nlohmann::json reply;
                  reply["choices"] = {
                      {{"message",
                        {{"content", who + "|" + text + "|t=" +
                                         std::to_string(body.at("temperature")
                                                            .get<double>())}}}}};
                  res.set_content(reply.dump(), "application/json");
                });
    server.Post("/logprob", [](const httplib::Request& req,
                               httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const double value =
          body.at("model") == "policy"
              ? -1.0 * static_cast<double>(
                           body.at("response").get<std::string>().size())
              : -100.0;
      nlohmann::json reply;
      reply["logprob"] = value;
      res.set_content(reply.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~LocalServer() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("http chat client speaks the chat-completion wire schema") {
  LocalServer local;
  HttpChatConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(local.port);
  HttpChatClient client(cfg);

  ChatRequest req;
  req.system = "be brief";
  req.user = "hello";
  req.temperature = 0.7;
  const std::string reply = client.complete(req);
  CHECK(reply.find("sys|hello|") == 0);

  req.system.reset();
  CHECK(client.complete(req).find("none|hello|") == 0);
}

TEST_CASE("http chat client surfaces transport failures") {
  HttpChatConfig cfg;
  cfg.base_url = "http://127.0.0.1:9";  // discard port; nothing listens
  cfg.timeout_seconds = 1;
  HttpChatClient client(cfg);
  ChatRequest req;
  req.user = "hello";
  CHECK_THROWS_AS(client.complete(req), TransportError);
}

TEST_CASE("http logprob provider round-trips policy and reference") {
  LocalServer local;
  HttpProviderConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(local.port);
  HttpLogProbProvider provider(cfg);
  CHECK(provider.logprob("s", "x", "12345", PolicyRef::Policy) == -5.0);
  CHECK(provider.logprob("s", "x", "12345", PolicyRef::Reference) == -100.0);
}
