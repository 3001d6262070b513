#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

namespace pfp {

struct ChatRequest {
  std::optional<std::string> system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 1024;
  // Sampling stream identifier; lets deterministic backends return distinct
  // completions for otherwise-identical requests. Forwarded to HTTP backends
  // when non-zero.
  std::uint64_t seed = 0;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the generated text. Throws TransportError on failure.
  virtual std::string complete(const ChatRequest& request) = 0;
};

// Hex key identifying a request; 64-bit FNV-1a over all request fields.
std::string request_digest(const ChatRequest& request);

// Mock client answering from a digest -> response table, loadable from a
// line-delimited file of {"digest": ..., "response": ...} records. Unknown
// digests raise TransportError.
class ScriptedChatClient : public ChatClient {
 public:
  explicit ScriptedChatClient(
      std::unordered_map<std::string, std::string> script);
  static ScriptedChatClient from_file(const std::filesystem::path& path);

  std::string complete(const ChatRequest& request) override;

  void add(const ChatRequest& request, std::string response);

 private:
  std::unordered_map<std::string, std::string> script_;
};

// Chat-completion HTTP client: POSTs
//   {model, messages: [{role, content}...], temperature, max_tokens}
// and reads {choices: [{message: {content}}]}. The bearer token is read
// from the configured environment variable when present.
struct HttpChatConfig {
  std::string base_url;  // e.g. "http://localhost:8080"
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string token_env = "PFP_API_TOKEN";
  int timeout_seconds = 120;
};

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  HttpChatConfig config_;
};

}  // namespace pfp
