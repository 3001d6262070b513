#include "pfp/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "pfp/error.hpp"

namespace pfp {

namespace {

// Sub-feature labels in reading order; this order fixes index semantics.
constexpr std::array<std::array<std::string_view, kSubFeatureCount>,
                     kDomainCount>
    kSubFeatureNames = {{
        {"Clarity", "Conciseness", "Format", "Vividness", "Consistency"},
        {"Formal", "Authoritative", "Sophisticated", "Engaging", "Familiar"},
        {"Sensitivity", "Safety", "Accuracy", "Morality", "Trustworthiness"},
        {"Basic", "Novice", "Intermediate", "Advanced", "Expert"},
        {"Relevance", "Practicality", "Depth", "Creativity", "Efficiency"},
    }};

constexpr std::array<std::string_view, kDomainCount> kDomainKeys = {
    "Style", "Tone", "Harmlessness", "BackgroundKnowledge", "Informativeness"};

constexpr std::array<std::string_view, kDomainCount> kDomainLabels = {
    "Style", "Tone", "Harmlessness", "Background Knowledge",
    "Informativeness"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

}  // namespace

bool FeatureDistribution::valid(double tol) const {
  for (const auto& p : probs) {
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

std::string_view domain_key(Domain d) {
  return kDomainKeys[static_cast<int>(d)];
}

std::string_view domain_label(Domain d) {
  return kDomainLabels[static_cast<int>(d)];
}

std::string_view sub_feature_name(Domain d, int index) {
  return kSubFeatureNames[static_cast<int>(d)][index];
}

SubFeature sub_feature(Domain d, int index) {
  return SubFeature{d, index, sub_feature_name(d, index)};
}

SubFeature sub_feature_by_name(Domain d, std::string_view name) {
  const std::string_view wanted = trim(name);
  for (int j = 0; j < kSubFeatureCount; ++j) {
    if (iequals(wanted, sub_feature_name(d, j))) return sub_feature(d, j);
  }
  throw UnknownSubFeature("no sub-feature named '" + std::string(name) +
                          "' in domain " + std::string(domain_key(d)));
}

Domain domain_by_key(std::string_view key) {
  const std::string_view wanted = trim(key);
  for (Domain d : kAllDomains) {
    if (iequals(wanted, domain_key(d))) return d;
  }
  throw UnknownSubFeature("no domain named '" + std::string(key) + "'");
}

FeatureDistribution empirical_distribution(
    std::span<const FeatureVector> features) {
  if (features.empty()) throw EmptyInput("empirical_distribution: no features");
  FeatureDistribution dist;
  for (const FeatureVector& fv : features) {
    for (int d = 0; d < kDomainCount; ++d) dist.probs[d][fv.entries[d]] += 1.0;
  }
  const double n = static_cast<double>(features.size());
  for (auto& p : dist.probs)
    for (double& v : p) v /= n;
  return dist;
}

std::string format_feature_vector(const FeatureVector& fv) {
  std::string out;
  for (int d = 0; d < kDomainCount; ++d) {
    if (d > 0) out += ',';
    out += kDomainKeys[d];
    out += '=';
    out += kSubFeatureNames[d][fv.entries[d]];
  }
  return out;
}

FeatureVector parse_feature_vector(std::string_view text) {
  FeatureVector fv;
  std::size_t pos = 0;
  for (int d = 0; d < kDomainCount; ++d) {
    if (d > 0) {
      if (pos >= text.size() || text[pos] != ',')
        throw ParseError("expected ','", pos);
      ++pos;
    }
    const std::size_t eq = text.find('=', pos);
    if (eq == std::string_view::npos)
      throw ParseError("expected 'Domain=Name' pair", pos);
    const std::string_view key = trim(text.substr(pos, eq - pos));
    if (!iequals(key, kDomainKeys[d]))
      throw ParseError("expected domain '" + std::string(kDomainKeys[d]) +
                           "', got '" + std::string(key) + "'",
                       pos);
    std::size_t end = text.find(',', eq + 1);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view name = text.substr(eq + 1, end - eq - 1);
    try {
      fv.entries[d] = sub_feature_by_name(static_cast<Domain>(d), name).index;
    } catch (const UnknownSubFeature&) {
      throw ParseError("unknown sub-feature '" + std::string(trim(name)) +
                           "' for domain " + std::string(kDomainKeys[d]),
                       eq + 1);
    }
    pos = end;
  }
  if (pos != text.size()) throw ParseError("trailing characters", pos);
  return fv;
}

std::string taxonomy_table() {
  std::ostringstream os;
  os << "Domain               | Sub-features\n";
  os << "---------------------+--------------------------------------------------------------\n";
  for (int d = 0; d < kDomainCount; ++d) {
    std::string label(kDomainLabels[d]);
    label.resize(20, ' ');
    os << label << " | ";
    for (int j = 0; j < kSubFeatureCount; ++j) {
      if (j > 0) os << ", ";
      os << kSubFeatureNames[d][j];
    }
    os << '\n';
  }
  return os.str();
}

std::string taxonomy_lines() {
  std::ostringstream os;
  for (int d = 0; d < kDomainCount; ++d)
    for (int j = 0; j < kSubFeatureCount; ++j)
      os << kDomainKeys[d] << '\t' << kSubFeatureNames[d][j] << '\n';
  return os.str();
}

}  // namespace pfp
