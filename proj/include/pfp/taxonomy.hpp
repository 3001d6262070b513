#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pfp {

inline constexpr int kDomainCount = 5;
inline constexpr int kSubFeatureCount = 5;

// The five preference domains, in fixed index order 0..4.
enum class Domain : int {
  Style = 0,
  Tone = 1,
  Harmlessness = 2,
  BackgroundKnowledge = 3,
  Informativeness = 4,
};

constexpr std::array<Domain, kDomainCount> kAllDomains = {
    Domain::Style, Domain::Tone, Domain::Harmlessness,
    Domain::BackgroundKnowledge, Domain::Informativeness};

struct SubFeature {
  Domain domain;
  int index;              // 0..4 within the domain
  std::string_view name;  // canonical label

  bool operator==(const SubFeature&) const = default;
};

// One sub-feature index per domain.
struct FeatureVector {
  std::array<int, kDomainCount> entries{};

  int& operator[](Domain d) { return entries[static_cast<int>(d)]; }
  int operator[](Domain d) const { return entries[static_cast<int>(d)]; }
  bool operator==(const FeatureVector&) const = default;
};

// Per-domain categorical distribution over the five sub-features.
struct FeatureDistribution {
  std::array<std::array<double, kSubFeatureCount>, kDomainCount> probs{};

  std::array<double, kSubFeatureCount>& operator[](Domain d) {
    return probs[static_cast<int>(d)];
  }
  const std::array<double, kSubFeatureCount>& operator[](Domain d) const {
    return probs[static_cast<int>(d)];
  }
  bool operator==(const FeatureDistribution&) const = default;

  // Each per-domain vector must be non-negative and sum to 1 within tol.
  bool valid(double tol = 1e-9) const;
};

// Short identifier used in machine-readable formats, e.g. "BackgroundKnowledge".
std::string_view domain_key(Domain d);

// Human-readable name used in prompts and reports, e.g. "Background Knowledge".
std::string_view domain_label(Domain d);

// Canonical sub-feature label for (domain, index).
std::string_view sub_feature_name(Domain d, int index);

SubFeature sub_feature(Domain d, int index);

// Case-insensitive, whitespace-trimmed lookup. Throws UnknownSubFeature.
SubFeature sub_feature_by_name(Domain d, std::string_view name);

// Domain lookup by key ("Style", "BackgroundKnowledge", ...), case-insensitive.
// Throws UnknownSubFeature when no domain matches.
Domain domain_by_key(std::string_view key);

// Per-domain frequency of sub-feature indices. Throws EmptyInput.
FeatureDistribution empirical_distribution(std::span<const FeatureVector> features);

// "Style=Format,Tone=Formal,..." in fixed domain order.
std::string format_feature_vector(const FeatureVector& fv);

// Inverse of format_feature_vector. Throws ParseError with the offending
// character position.
FeatureVector parse_feature_vector(std::string_view text);

// Taxonomy listing for the CLI: "table" is column-aligned, "lines" is one
// "Domain<TAB>Name" row per sub-feature.
std::string taxonomy_table();
std::string taxonomy_lines();

}  // namespace pfp
