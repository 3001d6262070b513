#include "pfp/annotate.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <optional>
#include <thread>

#include "pfp/templates.hpp"

namespace pfp {

namespace {

constexpr std::string_view kAnswerAnchor = "Answer is";

bool is_skippable(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == ':' || c == '-' ||
         c == '.' || c == ')' || c == '(' || c == '[' || c == ']' ||
         c == '*' || c == '"' || c == '\'' || c == '`';
}

std::string trim_copy(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return std::string(s);
}

// Tries to read an answer right after one anchor occurrence.
std::optional<SubFeature> read_answer_at(std::string_view text,
                                         std::size_t cursor, Domain d) {
  while (cursor < text.size() && is_skippable(text[cursor])) ++cursor;
  if (cursor >= text.size()) return std::nullopt;

  const char head = text[cursor];
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(head)));
  const bool standalone =
      cursor + 1 >= text.size() ||
      !std::isalnum(static_cast<unsigned char>(text[cursor + 1]));
  if (upper >= 'A' && upper <= 'E' && standalone)
    return sub_feature(d, upper - 'A');

  std::size_t end = cursor;
  while (end < text.size() &&
         std::isalpha(static_cast<unsigned char>(text[end])))
    ++end;
  if (end > cursor) {
    try {
      return sub_feature_by_name(d, text.substr(cursor, end - cursor));
    } catch (const UnknownSubFeature&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

std::string render_extraction_prompt(Domain d,
                                     const RawPreferenceRecord& record) {
  if (record.instruction.empty()) throw MissingField("record has no instruction");
  if (record.chosen.empty()) throw MissingField("record has no chosen response");
  if (record.rejected.empty())
    throw MissingField("record has no rejected response");

  std::string text(pairwise_extraction_template(d));
  if (d != Domain::BackgroundKnowledge)
    text = substitute(text, "domain", domain_label(d));
  text = substitute(text, "prompt", record.instruction);
  text = substitute(text, "chosen", record.chosen);
  text = substitute(text, "rejected", record.rejected);
  text = substitute(text, "option", option_block(d));
  return text;
}

SubFeature parse_extraction_answer(std::string_view response, Domain d) {
  // Scan anchors from the last occurrence backwards; the first one that is
  // followed by a readable answer wins.
  std::size_t pos = response.rfind(kAnswerAnchor);
  while (pos != std::string_view::npos) {
    if (auto answer = read_answer_at(response, pos + kAnswerAnchor.size(), d))
      return *answer;
    if (pos == 0) break;
    pos = response.rfind(kAnswerAnchor, pos - 1);
  }
  throw ExtractionParseError("no answer found for domain " +
                             std::string(domain_key(d)));
}

FeatureVector extract_features(const RawPreferenceRecord& record,
                               ChatClient& client, const RetryPolicy& policy) {
  FeatureVector fv;
  for (Domain d : kAllDomains) {
    const std::string prompt = render_extraction_prompt(d, record);
    std::string last_error;
    bool done = false;
    for (int attempt = 0; attempt <= policy.retries && !done; ++attempt) {
      ChatRequest req;
      req.user = prompt;
      req.temperature = policy.temperature;
      req.max_tokens = policy.max_tokens;
      req.seed = static_cast<std::uint64_t>(attempt);
      const std::string reply = client.complete(req);
      try {
        fv[d] = parse_extraction_answer(reply, d).index;
        done = true;
      } catch (const ExtractionParseError& e) {
        last_error = e.what();
      }
    }
    if (!done) throw Unlabeled(d, last_error);
  }
  return fv;
}

AnnotationResult annotate_records(std::span<const RawPreferenceRecord> records,
                                  ChatClient& client,
                                  const RetryPolicy& policy,
                                  int max_in_flight) {
  struct Slot {
    std::optional<FeatureVector> features;
    bool unlabeled = false;
    std::exception_ptr failure;
  };
  std::vector<Slot> slots(records.size());

  parallel_for_indexed(records.size(), max_in_flight, [&](std::size_t i) {
    try {
      slots[i].features = extract_features(records[i], client, policy);
    } catch (const Unlabeled&) {
      slots[i].unlabeled = true;
    } catch (...) {
      slots[i].failure = std::current_exception();
    }
  });

  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].failure) {
      try {
        std::rethrow_exception(slots[i].failure);
      } catch (const std::exception& e) {
        throw TransportError("record " + records[i].id + ": " + e.what());
      }
    }
  }

  AnnotationResult result;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].unlabeled) {
      result.unlabeled_ids.push_back(records[i].id);
    } else {
      result.labeled.push_back({records[i].id, records[i].instruction,
                                records[i].chosen, records[i].rejected,
                                *slots[i].features});
    }
  }
  return result;
}

std::string render_synthesis_prompt(const FeatureVector& fv) {
  std::string text(synthesis_template());
  text = substitute(text, "style",
                    sub_feature_name(Domain::Style, fv[Domain::Style]));
  text = substitute(text, "tone",
                    sub_feature_name(Domain::Tone, fv[Domain::Tone]));
  text = substitute(
      text, "harmlessness",
      sub_feature_name(Domain::Harmlessness, fv[Domain::Harmlessness]));
  text = substitute(text, "background_knowledge",
                    sub_feature_name(Domain::BackgroundKnowledge,
                                     fv[Domain::BackgroundKnowledge]));
  text = substitute(
      text, "informativeness",
      sub_feature_name(Domain::Informativeness, fv[Domain::Informativeness]));
  return text;
}

std::string synthesize_system_prompt(const FeatureVector& fv,
                                     ChatClient& client, double temperature,
                                     std::uint64_t seed) {
  ChatRequest req;
  req.system = std::string(synthesis_system_message());
  req.user = render_synthesis_prompt(fv);
  req.temperature = temperature;
  req.max_tokens = 1024;
  req.seed = seed;
  const std::string reply = trim_copy(client.complete(req));
  if (reply.empty()) throw EmptyGeneration("synthesizer returned a blank message");
  return reply;
}

void parallel_for_indexed(std::size_t n, int max_in_flight,
                          const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1, max_in_flight), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace pfp
