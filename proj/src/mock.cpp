#include "pfp/mock.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "pfp/error.hpp"
#include "pfp/templates.hpp"

namespace pfp {

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t seed, std::string_view a,
                  std::string_view b = {}) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  h = fnv1a(h, a);
  h = fnv1a(h, "\x1f");
  h = fnv1a(h, b);
  h *= 0x9e3779b97f4a7c15ULL;
  return h ^ (h >> 29);
}

std::string lower_key(Domain d) {
  std::string key(domain_key(d));
  for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return key;
}

// First "tag-<domain>-<digit>" found in text at or after `from`.
int find_tag(std::string_view text, Domain d, std::size_t from = 0) {
  const std::string needle = "tag-" + lower_key(d) + "-";
  const std::size_t pos = text.find(needle, from);
  if (pos == std::string_view::npos ||
      pos + needle.size() >= text.size())
    return -1;
  const char digit = text[pos + needle.size()];
  if (digit < '0' || digit > '4') return -1;
  return digit - '0';
}

Domain extraction_domain(std::string_view user) {
  if (user.find("background knowledge") != std::string_view::npos)
    return Domain::BackgroundKnowledge;
  for (Domain d : {Domain::Style, Domain::Tone, Domain::Harmlessness,
                   Domain::Informativeness}) {
    const std::string phrase = "aspect of " + std::string(domain_label(d));
    if (user.find(phrase) != std::string_view::npos) return d;
  }
  throw TransportError("mock: extraction prompt names no known domain");
}

}  // namespace

DeterministicMockClient::DeterministicMockClient(std::uint64_t seed,
                                                 double fidelity)
    : seed_(seed), fidelity_(fidelity) {}

std::string DeterministicMockClient::feature_tag(Domain d, int index) {
  return "tag-" + lower_key(d) + "-" + std::to_string(index);
}

std::string DeterministicMockClient::complete(const ChatRequest& request) {
  total_calls_.fetch_add(1);
  const std::string digest = request_digest(request);

  const bool pairwise =
      request.user.find("determine why the preferred response is chosen") !=
      std::string::npos;
  const bool single =
      request.user.find(
          "analyze the response and determine which preference feature") !=
      std::string::npos;

  if (pairwise || single) {
    extraction_calls_.fetch_add(1);
    const Domain d = extraction_domain(request.user);
    // Pairwise prompts are answered from the quoted instruction; the
    // single-response variant from the quoted response.
    std::size_t from = 0;
    if (single) {
      const std::size_t marker = request.user.find("Response: [");
      from = marker == std::string::npos ? 0 : marker;
    }
    int index = find_tag(request.user, d, from);
    if (index < 0)
      index = static_cast<int>(mix(seed_, digest, "fallback-answer") % 5);
    const char letter = static_cast<char>('A' + index);
    std::ostringstream os;
    os << "Working through the comparison step by step, the evidence points "
          "to option "
       << letter << ".\n- Answer is " << letter;
    return os.str();
  }

  if (request.system && *request.system == synthesis_system_message()) {
    synthesis_calls_.fetch_add(1);
    FeatureVector fv;
    for (Domain d : kAllDomains) {
      const std::string field =
          std::string(d == Domain::BackgroundKnowledge
                          ? std::string_view("User's Background Knowledge")
                          : domain_label(d)) +
          ": ";
      const std::size_t pos = request.user.find(field);
      if (pos == std::string::npos)
        throw TransportError("mock: synthesis prompt missing " + field);
      std::size_t end = request.user.find('\n', pos);
      if (end == std::string::npos) end = request.user.size();
      const std::string name =
          request.user.substr(pos + field.size(), end - pos - field.size());
      fv[d] = sub_feature_by_name(d, name).index;
    }
    std::ostringstream os;
    os << "You are a " << sub_feature_name(Domain::Style, fv[Domain::Style])
       << "-minded guide with a "
       << sub_feature_name(Domain::Tone, fv[Domain::Tone])
       << " register, mindful of "
       << sub_feature_name(Domain::Harmlessness, fv[Domain::Harmlessness])
       << " and writing for a "
       << sub_feature_name(Domain::BackgroundKnowledge,
                           fv[Domain::BackgroundKnowledge])
       << " reader who values "
       << sub_feature_name(Domain::Informativeness, fv[Domain::Informativeness])
       << ". prefs[";
    for (int d = 0; d < kDomainCount; ++d) {
      if (d > 0) os << ' ';
      os << feature_tag(static_cast<Domain>(d), fv.entries[d]);
    }
    os << "] variant-" << std::hex << mix(seed_, digest, "variant");
    return os.str();
  }

  // Response generation: realize the system prompt's tags with probability
  // fidelity per domain, otherwise a hash-drawn substitute. The instruction
  // is identified by hash only; echoing its text would leak its tags into
  // the response and skew downstream feature measurement.
  generation_calls_.fetch_add(1);
  std::ostringstream os;
  os << "Reply-" << std::hex << mix(seed_, digest, "head") << std::dec << ":";
  for (Domain d : kAllDomains) {
    int index = request.system ? find_tag(*request.system, d) : -1;
    const std::uint64_t roll = mix(seed_, digest, lower_key(d));
    const double u = static_cast<double>(roll >> 11) * 0x1.0p-53;
    if (index < 0 || u >= fidelity_)
      index = static_cast<int>(mix(seed_, digest, "alt-" + lower_key(d)) % 5);
    os << ' ' << feature_tag(d, index);
  }
  os << " ref-" << std::hex << mix(seed_, digest, "ref");
  return os.str();
}

double HashLogProbProvider::logprob(std::string_view system,
                                    std::string_view instruction,
                                    std::string_view response,
                                    PolicyRef model) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed_;
  h = fnv1a(h, system);
  h = fnv1a(h, "\x1f");
  h = fnv1a(h, instruction);
  h = fnv1a(h, "\x1f");
  h = fnv1a(h, response);
  h = fnv1a(h, model == PolicyRef::Policy ? "p" : "r");
  h *= 0x9e3779b97f4a7c15ULL;
  // Stable pseudo log-probabilities in [-101, -1].
  return -1.0 - static_cast<double>(h % 100000) * 1e-3;
}

}  // namespace pfp
