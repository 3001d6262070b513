#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfp/annotate.hpp"
#include "pfp/relabel.hpp"
#include "pfp/taxonomy.hpp"

namespace pfp {

using Json = nlohmann::ordered_json;

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const Json> records);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value);

// FeatureDistribution file: {"Style": [..5], ..., "Informativeness": [..5]}.
Json distribution_to_json(const FeatureDistribution& dist);
FeatureDistribution distribution_from_json(const Json& j);

// Feature block keyed by snake_case domain, values are sub-feature names.
Json features_to_json(const FeatureVector& fv);
FeatureVector features_from_json(const Json& j);

// Prediction records: {"instruction_id", "domain", "probs": [5 reals]},
// grouped per domain with one matrix row per distinct instruction id (rows
// ordered by first appearance). Every instruction must appear in all five
// domains.
struct PredictionFile {
  std::vector<std::string> instruction_ids;
  std::array<PredictionMatrix, kDomainCount> matrices;
};
PredictionFile read_prediction_records(const std::filesystem::path& path);
void write_prediction_records(const std::filesystem::path& path,
                              const PredictionFile& predictions);

// Raw preference records {"id", "instruction", "chosen", "rejected"}.
std::vector<RawPreferenceRecord> read_preference_records(
    const std::filesystem::path& path);

}  // namespace pfp
