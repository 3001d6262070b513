#include "pfp/diagnostics.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "pfp/annotate.hpp"
#include "pfp/error.hpp"
#include "pfp/templates.hpp"

namespace pfp {

namespace {

nlohmann::ordered_json distribution_json(const FeatureDistribution& dist) {
  nlohmann::ordered_json j;
  for (Domain d : kAllDomains) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (double v : dist[d]) row.push_back(v);
    j[std::string(domain_key(d))] = std::move(row);
  }
  return j;
}

FeatureDistribution distribution_from(const nlohmann::json& j) {
  FeatureDistribution dist;
  for (Domain d : kAllDomains) {
    const auto row =
        j.at(std::string(domain_key(d))).get<std::vector<double>>();
    if (row.size() != kSubFeatureCount)
      throw IoError("distribution row must have 5 entries");
    std::copy(row.begin(), row.end(), dist[d].begin());
  }
  return dist;
}

}  // namespace

std::string render_single_response_prompt(Domain d,
                                          const std::string& instruction,
                                          const std::string& response) {
  if (instruction.empty()) throw MissingField("record has no instruction");
  if (response.empty()) throw MissingField("record has no response");
  std::string text(single_response_extraction_template(d));
  if (d != Domain::BackgroundKnowledge)
    text = substitute(text, "domain", domain_label(d));
  text = substitute(text, "prompt", instruction);
  text = substitute(text, "response", response);
  text = substitute(text, "options", option_block(d));
  return text;
}

ResponseDistributionResult response_feature_distribution(
    std::span<const ResponseRecord> responses, ChatClient& client,
    int max_in_flight) {
  if (responses.empty())
    throw EmptyInput("response_feature_distribution: no responses");

  struct Slot {
    std::array<int, kDomainCount> answer;  // -1 when unparsed
  };
  std::vector<Slot> slots(responses.size());
  std::atomic<std::size_t> unparsed{0};

  parallel_for_indexed(responses.size(), max_in_flight, [&](std::size_t i) {
    for (Domain d : kAllDomains) {
      int& cell = slots[i].answer[static_cast<int>(d)];
      cell = -1;
      try {
        ChatRequest req;
        req.user = render_single_response_prompt(d, responses[i].instruction,
                                                 responses[i].response);
        req.temperature = 0.0;
        req.max_tokens = 1024;
        cell = parse_extraction_answer(client.complete(req), d).index;
      } catch (const ExtractionParseError&) {
        unparsed.fetch_add(1);
      }
    }
  });

  ResponseDistributionResult result;
  result.responses = responses.size();
  result.unparsed_count = unparsed.load();
  for (int d = 0; d < kDomainCount; ++d) {
    std::array<double, kSubFeatureCount> counts{};
    double total = 0.0;
    for (const Slot& slot : slots) {
      if (slot.answer[d] < 0) continue;
      counts[slot.answer[d]] += 1.0;
      total += 1.0;
    }
    if (total == 0.0)
      throw EmptyInput("no parseable answers for domain " +
                       std::string(domain_key(static_cast<Domain>(d))));
    for (int j = 0; j < kSubFeatureCount; ++j)
      result.distribution.probs[d][j] = counts[j] / total;
  }
  return result;
}

std::array<double, kDomainCount> kl_divergence(const FeatureDistribution& p,
                                               const FeatureDistribution& q,
                                               double smoothing_epsilon) {
  std::array<double, kDomainCount> kl{};
  for (int d = 0; d < kDomainCount; ++d) {
    if (p.probs[d] == q.probs[d]) {
      kl[d] = 0.0;  // D(p || p) is exactly zero; skip the smoothing bias
      continue;
    }
    double acc = 0.0;
    for (int j = 0; j < kSubFeatureCount; ++j) {
      const double pj = p.probs[d][j];
      if (pj == 0.0) continue;
      const double qj = (q.probs[d][j] + smoothing_epsilon) /
                        (1.0 + kSubFeatureCount * smoothing_epsilon);
      if (qj <= 0.0)
        throw ZeroSupport("kl_divergence: q has no mass where p does (domain " +
                          std::string(domain_key(static_cast<Domain>(d))) +
                          ", entry " + std::to_string(j) + ")");
      acc += pj * std::log(pj / qj);
    }
    kl[d] = acc;
  }
  return kl;
}

DriftReport drift_report(const FeatureDistribution& initial,
                         std::span<const ResponseRecord> responses,
                         ChatClient& client, double smoothing_epsilon) {
  const ResponseDistributionResult measured =
      response_feature_distribution(responses, client);
  DriftReport report = drift_report_from_distribution(
      initial, measured.distribution, measured.responses, smoothing_epsilon);
  report.unparsed_count = measured.unparsed_count;
  return report;
}

DriftReport drift_report_from_distribution(const FeatureDistribution& initial,
                                           const FeatureDistribution& measured,
                                           std::size_t sample_count,
                                           double smoothing_epsilon) {
  DriftReport report;
  report.initial = initial;
  report.measured = measured;
  report.kl_nats = kl_divergence(initial, measured, smoothing_epsilon);
  report.sample_count = sample_count;
  report.smoothing_epsilon = smoothing_epsilon;
  return report;
}

std::string render_report(const DriftReport& report,
                          const std::string& format) {
  if (format == "json") {
    nlohmann::ordered_json j;
    j["kl_nats"] = nlohmann::ordered_json::object();
    for (Domain d : kAllDomains)
      j["kl_nats"][std::string(domain_key(d))] =
          report.kl_nats[static_cast<int>(d)];
    j["summed_kl"] = report.summed_kl();
    j["initial"] = distribution_json(report.initial);
    j["measured"] = distribution_json(report.measured);
    j["sample_count"] = report.sample_count;
    j["unparsed_count"] = report.unparsed_count;
    j["smoothing_epsilon"] = report.smoothing_epsilon;
    j["log_base"] = "e";
    return j.dump(2) + "\n";
  }
  if (format == "series") {
    // domain <TAB> kl <TAB> p0..p4 (measured)
    std::ostringstream os;
    os << "domain\tkl_nats";
    for (int j = 0; j < kSubFeatureCount; ++j) os << "\tmeasured_" << j;
    os << '\n';
    for (Domain d : kAllDomains) {
      os << domain_key(d) << '\t' << report.kl_nats[static_cast<int>(d)];
      for (double v : report.measured[d]) os << '\t' << v;
      os << '\n';
    }
    return os.str();
  }
  throw Error("render_report: unknown format '" + format + "'");
}

DriftReport parse_report_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DriftReport report;
  report.initial = distribution_from(j.at("initial"));
  report.measured = distribution_from(j.at("measured"));
  for (Domain d : kAllDomains)
    report.kl_nats[static_cast<int>(d)] =
        j.at("kl_nats").at(std::string(domain_key(d))).get<double>();
  report.sample_count = j.at("sample_count").get<std::size_t>();
  report.unparsed_count = j.at("unparsed_count").get<std::size_t>();
  report.smoothing_epsilon = j.at("smoothing_epsilon").get<double>();
  return report;
}

}  // namespace pfp
