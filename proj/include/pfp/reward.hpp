#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>

namespace pfp {

// Summed natural-log token probabilities of two responses under the current
// policy and the reference policy, conditioned on the same (system,
// instruction) pair.
struct LogProbQuad {
  double policy_y1 = 0.0;
  double ref_y1 = 0.0;
  double policy_y2 = 0.0;
  double ref_y2 = 0.0;
};

struct RewardConfig {
  double beta = 0.1;
  double length_penalty_alpha = 0.0;
};

enum class PolicyRef { Policy, Reference };

// Abstracts log-probability evaluation away from any training framework.
class LogProbProvider {
 public:
  virtual ~LogProbProvider() = default;
  virtual double logprob(std::string_view system, std::string_view instruction,
                         std::string_view response, PolicyRef model) = 0;
};

struct PreferenceLabel {
  int winner = 0;            // 1 or 2
  double probability = 0.0;  // p(y1 beats y2)
};

// Implicit-reward preference probability:
// sigma(beta * [(policy_y1 - ref_y1) - (policy_y2 - ref_y2)]).
double preference_probability(const LogProbQuad& q, const RewardConfig& cfg);

// Labels winner 1 iff the probability exceeds 0.5; exact ties go to 2.
PreferenceLabel judge(const LogProbQuad& q, const RewardConfig& cfg);

// raw_reward - alpha * |y| with |y| a character count.
double length_penalized_reward(double raw_reward, std::size_t response_length,
                               const RewardConfig& cfg);

// Labeling with the length penalty applied to each side's implicit reward
// before comparison; reduces to judge() when alpha is zero.
PreferenceLabel judge_length_penalized(const LogProbQuad& q,
                                       std::size_t length_y1,
                                       std::size_t length_y2,
                                       const RewardConfig& cfg);

struct EvalPreferenceRecord {
  std::string system;
  std::string instruction;
  std::string good;
  std::string bad;
};

// Fraction of records whose implicit preference picks `good` strictly over
// `bad`. Provider failures abort with a ProviderError carrying the partial
// tally.
double internal_preference_accuracy(std::span<const EvalPreferenceRecord> records,
                                    LogProbProvider& provider,
                                    const RewardConfig& cfg);

// Hex key of the mock-provider lookup table: 64-bit FNV-1a over
// (system, instruction, response, model tag).
std::string logprob_digest(std::string_view system, std::string_view instruction,
                           std::string_view response, PolicyRef model);

// Mock provider backed by a digest -> logprob table, loadable from a
// line-delimited file of {"digest": ..., "logprob": ...} records.
class TableLogProbProvider : public LogProbProvider {
 public:
  explicit TableLogProbProvider(
      std::unordered_map<std::string, double> table);
  static TableLogProbProvider from_file(const std::filesystem::path& path);

  double logprob(std::string_view system, std::string_view instruction,
                 std::string_view response, PolicyRef model) override;

  void insert(std::string_view system, std::string_view instruction,
              std::string_view response, PolicyRef model, double value);

 private:
  std::unordered_map<std::string, double> table_;
};

}  // namespace pfp
