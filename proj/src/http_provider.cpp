#include "pfp/http_provider.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "pfp/error.hpp"

namespace pfp {

HttpLogProbProvider::HttpLogProbProvider(HttpProviderConfig config)
    : config_(std::move(config)) {}

double HttpLogProbProvider::logprob(std::string_view system,
                                    std::string_view instruction,
                                    std::string_view response,
                                    PolicyRef model) {
  nlohmann::json body;
  body["system"] = std::string(system);
  body["instruction"] = std::string(instruction);
  body["response"] = std::string(response);
  body["model"] = model == PolicyRef::Policy ? "policy" : "reference";

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str()))
    headers.emplace("Authorization", std::string("Bearer ") + token);

  const auto res =
      client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res)
    throw TransportError("logprob request to " + config_.base_url +
                         " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError("logprob request returned status " +
                         std::to_string(res->status) + ": " + res->body);
  try {
    return nlohmann::json::parse(res->body).at("logprob").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed logprob response: ") +
                         e.what());
  }
}

}  // namespace pfp
