#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfp/chat.hpp"
#include "pfp/error.hpp"
#include "pfp/taxonomy.hpp"

namespace pfp {

struct RawPreferenceRecord {
  std::string id;
  std::string instruction;
  std::string chosen;
  std::string rejected;
};

struct AnnotatedPreferenceRecord {
  std::string id;
  std::string instruction;
  std::string chosen;
  std::string rejected;
  FeatureVector features;
};

// A record whose extraction could not be completed for one domain.
class Unlabeled : public Error {
 public:
  Unlabeled(Domain domain, const std::string& why)
      : Error("unlabeled (" + std::string(domain_key(domain)) + "): " + why),
        domain_(domain) {}
  Domain domain() const { return domain_; }

 private:
  Domain domain_;
};

struct RetryPolicy {
  int retries = 1;           // re-asks after a parse failure
  double temperature = 0.0;  // extraction runs greedily
  int max_tokens = 1024;
};

// Fills the pairwise extraction template for one domain. Throws
// MissingField when instruction/chosen/rejected is empty.
std::string render_extraction_prompt(Domain d,
                                     const RawPreferenceRecord& record);

// Finds the last "Answer is" in the reply and maps the letter (or verbatim
// sub-feature name) that follows; letters take precedence over names.
// Throws ExtractionParseError when nothing matches.
SubFeature parse_extraction_answer(std::string_view response, Domain d);

// One extraction call per domain; parse failures are retried per the
// policy, then the record is given up as Unlabeled. Transport errors
// propagate immediately.
FeatureVector extract_features(const RawPreferenceRecord& record,
                               ChatClient& client,
                               const RetryPolicy& policy = {});

struct AnnotationResult {
  std::vector<AnnotatedPreferenceRecord> labeled;  // input order
  std::vector<std::string> unlabeled_ids;          // input order
};

// Batch extraction with a bounded number of in-flight records; output
// order follows the input regardless of completion order.
AnnotationResult annotate_records(std::span<const RawPreferenceRecord> records,
                                  ChatClient& client,
                                  const RetryPolicy& policy = {},
                                  int max_in_flight = 8);

// Fills the synthesis template with the vector's sub-feature names.
std::string render_synthesis_prompt(const FeatureVector& fv);

// Sends the synthesis prompt at the given temperature and returns the
// generated system message, trimmed. Throws EmptyGeneration on a blank
// reply. Distinct seeds give deterministic backends distinct samples.
std::string synthesize_system_prompt(const FeatureVector& fv,
                                     ChatClient& client, double temperature,
                                     std::uint64_t seed = 0);

// Applies fn to 0..n-1 with at most max_in_flight concurrent calls. fn must
// capture its own failures; this helper never reorders or drops indices.
void parallel_for_indexed(std::size_t n, int max_in_flight,
                          const std::function<void(std::size_t)>& fn);

}  // namespace pfp
