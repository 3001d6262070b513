#include "pfp/chat.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "pfp/error.hpp"

namespace pfp {

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string request_digest(const ChatRequest& request) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, request.system ? *request.system : std::string_view("\x01"));
  h = fnv1a(h, "\x1f");
  h = fnv1a(h, request.user);
  h = fnv1a(h, "\x1f");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g|%d|%llu", request.temperature,
                request.max_tokens,
                static_cast<unsigned long long>(request.seed));
  h = fnv1a(h, buf);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(hex);
}

ScriptedChatClient::ScriptedChatClient(
    std::unordered_map<std::string, std::string> script)
    : script_(std::move(script)) {}

ScriptedChatClient ScriptedChatClient::from_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open chat script: " + path.string());
  std::unordered_map<std::string, std::string> script;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      script[j.at("digest").get<std::string>()] =
          j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad script record at " + path.string() + ":" +
                    std::to_string(line_no) + ": " + e.what());
    }
  }
  return ScriptedChatClient(std::move(script));
}

std::string ScriptedChatClient::complete(const ChatRequest& request) {
  const std::string key = request_digest(request);
  const auto it = script_.find(key);
  if (it == script_.end())
    throw TransportError("no scripted response for digest " + key);
  return it->second;
}

void ScriptedChatClient::add(const ChatRequest& request, std::string response) {
  script_[request_digest(request)] = std::move(response);
}

HttpChatClient::HttpChatClient(HttpChatConfig config)
    : config_(std::move(config)) {}

std::string HttpChatClient::complete(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = config_.model;
  auto& messages = body["messages"] = nlohmann::json::array();
  if (request.system)
    messages.push_back({{"role", "system"}, {"content", *request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  if (request.seed != 0) body["seed"] = request.seed;

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str()))
    headers.emplace("Authorization", std::string("Bearer ") + token);

  const auto res =
      client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res)
    throw TransportError("chat request to " + config_.base_url +
                         " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError("chat request returned status " +
                         std::to_string(res->status) + ": " + res->body);
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content")
        .get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed chat response: ") + e.what());
  }
}

}  // namespace pfp
