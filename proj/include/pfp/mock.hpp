#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "pfp/chat.hpp"
#include "pfp/reward.hpp"
#include "pfp/taxonomy.hpp"

namespace pfp {

// Self-contained deterministic chat backend for desk-scale runs. It
// recognizes the library's own prompt shapes:
//   - extraction prompts are answered from "tag-<domain>-<index>" markers
//     embedded in the quoted instruction/response (pseudo-random letter
//     when absent),
//   - synthesis prompts yield a one-paragraph system message that carries
//     the requested features as tags plus a per-seed variant marker,
//   - anything else is treated as response generation conditioned on the
//     system prompt's tags.
// Every reply is a pure function of (request, seed), so runs are
// bit-reproducible and calls may be issued concurrently.
class DeterministicMockClient : public ChatClient {
 public:
  explicit DeterministicMockClient(std::uint64_t seed, double fidelity = 1.0);

  std::string complete(const ChatRequest& request) override;

  std::size_t total_calls() const { return total_calls_.load(); }
  std::size_t extraction_calls() const { return extraction_calls_.load(); }
  std::size_t synthesis_calls() const { return synthesis_calls_.load(); }
  std::size_t generation_calls() const { return generation_calls_.load(); }

  // Marker vocabulary shared with corpus generators.
  static std::string feature_tag(Domain d, int index);

 private:
  std::uint64_t seed_;
  double fidelity_;  // chance a generated response realizes a system tag
  std::atomic<std::size_t> total_calls_{0};
  std::atomic<std::size_t> extraction_calls_{0};
  std::atomic<std::size_t> synthesis_calls_{0};
  std::atomic<std::size_t> generation_calls_{0};
};

// Log-probabilities drawn deterministically from a content hash; stands in
// for policy/reference evaluation in mock runs.
class HashLogProbProvider : public LogProbProvider {
 public:
  explicit HashLogProbProvider(std::uint64_t seed) : seed_(seed) {}

  double logprob(std::string_view system, std::string_view instruction,
                 std::string_view response, PolicyRef model) override;

 private:
  std::uint64_t seed_;
};

}  // namespace pfp
