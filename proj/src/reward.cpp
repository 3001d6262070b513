#include "pfp/reward.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "pfp/error.hpp"

namespace pfp {

namespace {

double logistic(double x) {
  if (x >= 0.0) {
    const double t = std::exp(-x);
    return 1.0 / (1.0 + t);
  }
  const double t = std::exp(x);
  return t / (1.0 + t);
}

void check_quad(const LogProbQuad& q) {
  if (!std::isfinite(q.policy_y1) || !std::isfinite(q.ref_y1) ||
      !std::isfinite(q.policy_y2) || !std::isfinite(q.ref_y2))
    throw NonFinite("log-probability quad contains a non-finite value");
}

void check_cfg(const RewardConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw Error("beta must be positive");
  if (cfg.length_penalty_alpha < 0.0)
    throw Error("length penalty alpha must be non-negative");
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double preference_probability(const LogProbQuad& q, const RewardConfig& cfg) {
  check_quad(q);
  check_cfg(cfg);
  const double gap = (q.policy_y1 - q.ref_y1) - (q.policy_y2 - q.ref_y2);
  return logistic(cfg.beta * gap);
}

PreferenceLabel judge(const LogProbQuad& q, const RewardConfig& cfg) {
  const double p = preference_probability(q, cfg);
  return PreferenceLabel{p > 0.5 ? 1 : 2, p};
}

double length_penalized_reward(double raw_reward, std::size_t response_length,
                               const RewardConfig& cfg) {
  return raw_reward -
         cfg.length_penalty_alpha * static_cast<double>(response_length);
}

PreferenceLabel judge_length_penalized(const LogProbQuad& q,
                                       std::size_t length_y1,
                                       std::size_t length_y2,
                                       const RewardConfig& cfg) {
  if (cfg.length_penalty_alpha == 0.0) return judge(q, cfg);
  check_quad(q);
  check_cfg(cfg);
  const double r1 = length_penalized_reward(
      cfg.beta * (q.policy_y1 - q.ref_y1), length_y1, cfg);
  const double r2 = length_penalized_reward(
      cfg.beta * (q.policy_y2 - q.ref_y2), length_y2, cfg);
  const double p = logistic(r1 - r2);
  return PreferenceLabel{p > 0.5 ? 1 : 2, p};
}

double internal_preference_accuracy(std::span<const EvalPreferenceRecord> records,
                                    LogProbProvider& provider,
                                    const RewardConfig& cfg) {
  if (records.empty())
    throw EmptyInput("internal_preference_accuracy: no records");
  std::size_t done = 0;
  std::size_t wins = 0;
  for (const EvalPreferenceRecord& rec : records) {
    LogProbQuad q;
    try {
      q.policy_y1 = provider.logprob(rec.system, rec.instruction, rec.good,
                                     PolicyRef::Policy);
      q.ref_y1 = provider.logprob(rec.system, rec.instruction, rec.good,
                                  PolicyRef::Reference);
      q.policy_y2 = provider.logprob(rec.system, rec.instruction, rec.bad,
                                     PolicyRef::Policy);
      q.ref_y2 = provider.logprob(rec.system, rec.instruction, rec.bad,
                                  PolicyRef::Reference);
    } catch (const std::exception& e) {
      throw ProviderError("provider failed on record " + std::to_string(done) +
                              ": " + e.what(),
                          done, wins);
    }
    if (preference_probability(q, cfg) > 0.5) ++wins;
    ++done;
  }
  return static_cast<double>(wins) / static_cast<double>(done);
}

std::string logprob_digest(std::string_view system, std::string_view instruction,
                           std::string_view response, PolicyRef model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, system);
  h = fnv1a(h, "\x1f");
  h = fnv1a(h, instruction);
  h = fnv1a(h, "\x1f");
  h = fnv1a(h, response);
  h = fnv1a(h, "\x1f");
  h = fnv1a(h, model == PolicyRef::Policy ? "policy" : "reference");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

TableLogProbProvider::TableLogProbProvider(
    std::unordered_map<std::string, double> table)
    : table_(std::move(table)) {}

TableLogProbProvider TableLogProbProvider::from_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open logprob table: " + path.string());
  std::unordered_map<std::string, double> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      table[j.at("digest").get<std::string>()] = j.at("logprob").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad logprob record at " + path.string() + ":" +
                    std::to_string(line_no) + ": " + e.what());
    }
  }
  return TableLogProbProvider(std::move(table));
}

double TableLogProbProvider::logprob(std::string_view system,
                                     std::string_view instruction,
                                     std::string_view response,
                                     PolicyRef model) {
  const std::string key = logprob_digest(system, instruction, response, model);
  const auto it = table_.find(key);
  if (it == table_.end())
    throw TransportError("no logprob entry for digest " + key);
  return it->second;
}

void TableLogProbProvider::insert(std::string_view system,
                                  std::string_view instruction,
                                  std::string_view response, PolicyRef model,
                                  double value) {
  table_[logprob_digest(system, instruction, response, model)] = value;
}

}  // namespace pfp
