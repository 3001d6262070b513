#include "pfp/jsonl.hpp"

#include <fstream>
#include <unordered_map>

#include "pfp/error.hpp"

namespace pfp {

namespace {

constexpr std::array<std::string_view, kDomainCount> kSnakeKeys = {
    "style", "tone", "harmlessness", "background_knowledge",
    "informativeness"};

}  // namespace

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad record at " + path.string() + ":" +
                    std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_jsonl(const std::filesystem::path& path,
                 std::span<const Json> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Json& rec : records) out << rec.dump() << '\n';
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    Json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& value) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

Json distribution_to_json(const FeatureDistribution& dist) {
  Json j;
  for (Domain d : kAllDomains) {
    Json row = Json::array();
    for (double v : dist[d]) row.push_back(v);
    j[std::string(domain_key(d))] = std::move(row);
  }
  return j;
}

FeatureDistribution distribution_from_json(const Json& j) {
  FeatureDistribution dist;
  for (Domain d : kAllDomains) {
    const auto row =
        j.at(std::string(domain_key(d))).get<std::vector<double>>();
    if (row.size() != kSubFeatureCount)
      throw IoError("distribution rows must have 5 entries");
    std::copy(row.begin(), row.end(), dist[d].begin());
  }
  return dist;
}

Json features_to_json(const FeatureVector& fv) {
  Json j;
  for (int d = 0; d < kDomainCount; ++d)
    j[std::string(kSnakeKeys[d])] = std::string(
        sub_feature_name(static_cast<Domain>(d), fv.entries[d]));
  return j;
}

FeatureVector features_from_json(const Json& j) {
  FeatureVector fv;
  for (int d = 0; d < kDomainCount; ++d) {
    const std::string name = j.at(std::string(kSnakeKeys[d])).get<std::string>();
    fv.entries[d] = sub_feature_by_name(static_cast<Domain>(d), name).index;
  }
  return fv;
}

PredictionFile read_prediction_records(const std::filesystem::path& path) {
  PredictionFile out;
  std::unordered_map<std::string, std::size_t> row_of;
  std::array<std::vector<std::pair<std::size_t, std::array<double, 5>>>,
             kDomainCount>
      entries;

  for (const Json& rec : read_jsonl(path)) {
    const std::string id = rec.at("instruction_id").get<std::string>();
    const Domain d = domain_by_key(rec.at("domain").get<std::string>());
    const auto probs = rec.at("probs").get<std::vector<double>>();
    if (probs.size() != kSubFeatureCount)
      throw IoError("prediction record for " + id + " must carry 5 probs");
    auto [it, inserted] = row_of.try_emplace(id, out.instruction_ids.size());
    if (inserted) out.instruction_ids.push_back(id);
    std::array<double, 5> row{};
    std::copy(probs.begin(), probs.end(), row.begin());
    entries[static_cast<int>(d)].emplace_back(it->second, row);
  }

  const std::size_t n = out.instruction_ids.size();
  for (int d = 0; d < kDomainCount; ++d) {
    if (entries[d].size() != n)
      throw IoError("domain " +
                    std::string(domain_key(static_cast<Domain>(d))) + " has " +
                    std::to_string(entries[d].size()) + " records, expected " +
                    std::to_string(n));
    auto& m = out.matrices[d];
    m = PredictionMatrix::zeros(n, kSubFeatureCount);
    for (const auto& [row, probs] : entries[d])
      std::copy(probs.begin(), probs.end(), m.row(row));
  }
  return out;
}

void write_prediction_records(const std::filesystem::path& path,
                              const PredictionFile& predictions) {
  std::vector<Json> records;
  const std::size_t n = predictions.instruction_ids.size();
  records.reserve(n * kDomainCount);
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < kDomainCount; ++d) {
      const auto& m = predictions.matrices[d];
      Json rec;
      rec["instruction_id"] = predictions.instruction_ids[i];
      rec["domain"] = std::string(domain_key(static_cast<Domain>(d)));
      Json probs = Json::array();
      for (std::size_t j = 0; j < m.cols; ++j) probs.push_back(m.at(i, j));
      rec["probs"] = std::move(probs);
      records.push_back(std::move(rec));
    }
  }
  write_jsonl(path, records);
}

std::vector<RawPreferenceRecord> read_preference_records(
    const std::filesystem::path& path) {
  std::vector<RawPreferenceRecord> records;
  for (const Json& rec : read_jsonl(path)) {
    records.push_back({rec.at("id").get<std::string>(),
                       rec.at("instruction").get<std::string>(),
                       rec.at("chosen").get<std::string>(),
                       rec.at("rejected").get<std::string>()});
  }
  return records;
}

}  // namespace pfp
