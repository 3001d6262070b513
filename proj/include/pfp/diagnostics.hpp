#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfp/chat.hpp"
#include "pfp/taxonomy.hpp"

namespace pfp {

struct ResponseRecord {
  std::string instruction;
  std::string response;
};

struct ResponseDistributionResult {
  FeatureDistribution distribution;
  std::size_t responses = 0;       // records measured
  std::size_t unparsed_count = 0;  // failed (response, domain) extractions
};

// Fills the single-response extraction template for one domain.
std::string render_single_response_prompt(Domain d,
                                          const std::string& instruction,
                                          const std::string& response);

// One extraction call per (response, domain); parsed answers are
// aggregated into per-domain frequencies. Unparseable answers are excluded
// and counted. Throws EmptyInput when no responses are given or a domain
// ends up with no parsed answers at all.
ResponseDistributionResult response_feature_distribution(
    std::span<const ResponseRecord> responses, ChatClient& client,
    int max_in_flight = 8);

// Per-domain D_KL(p || q') in nats with q' = (q + eps) / (1 + 5 eps); zero
// entries of p contribute nothing, and identical vectors give exactly 0.
// With eps = 0 a zero in q under the support of p raises ZeroSupport.
std::array<double, kDomainCount> kl_divergence(const FeatureDistribution& p,
                                               const FeatureDistribution& q,
                                               double smoothing_epsilon = 1e-6);

struct DriftReport {
  FeatureDistribution initial;
  FeatureDistribution measured;
  std::array<double, kDomainCount> kl_nats{};
  std::size_t sample_count = 0;
  std::size_t unparsed_count = 0;
  double smoothing_epsilon = 1e-6;

  double summed_kl() const {
    double s = 0.0;
    for (double v : kl_nats) s += v;
    return s;
  }
  bool operator==(const DriftReport&) const = default;
};

// Measures the responses' feature distribution and its per-domain KL drift
// from the initial distribution.
DriftReport drift_report(const FeatureDistribution& initial,
                         std::span<const ResponseRecord> responses,
                         ChatClient& client, double smoothing_epsilon = 1e-6);

// Builds a drift report from an already-measured distribution (used by the
// simulator, which never renders response text).
DriftReport drift_report_from_distribution(const FeatureDistribution& initial,
                                           const FeatureDistribution& measured,
                                           std::size_t sample_count,
                                           double smoothing_epsilon = 1e-6);

// "json": structured report. "series": per-domain TSV rows ready for any
// plotting tool. Throws pfp::Error on an unknown format name.
std::string render_report(const DriftReport& report, const std::string& format);

// Inverse of render_report(report, "json").
DriftReport parse_report_json(const std::string& text);

}  // namespace pfp
