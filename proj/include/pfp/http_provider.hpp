#pragma once

#include <string>

#include "pfp/reward.hpp"

namespace pfp {

// Log-probability lookups over HTTP: POST {system, instruction, response,
// model: "policy"|"reference"} to base_url+path, expect {"logprob": real}.
struct HttpProviderConfig {
  std::string base_url;
  std::string path = "/logprob";
  std::string token_env = "PFP_API_TOKEN";
  int timeout_seconds = 120;
};

class HttpLogProbProvider : public LogProbProvider {
 public:
  explicit HttpLogProbProvider(HttpProviderConfig config);
  double logprob(std::string_view system, std::string_view instruction,
                 std::string_view response, PolicyRef model) override;

 private:
  HttpProviderConfig config_;
};

}  // namespace pfp
