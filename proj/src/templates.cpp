#include "pfp/templates.hpp"

namespace pfp {

namespace {

constexpr std::string_view kPairwise =
    R"(Read the following two responses to the same prompt. After reading, determine why the preferred response is chosen over the dispreferred response, focusing on the aspect of {domain}.

Prompt: [{prompt}]

Preferred Response: [{chosen}]

Dispreferred Response: [{rejected}]

### Question

An arbitrary person labeled the responses as preferred and dispreferred.
Considering the aspect of {domain}, what {domain} element does this person likely prefer?

Select one of the following options:

{option}

Finally you have to answer as following format:
- Answer is

Let's think step by step)";

constexpr std::string_view kPairwiseBackground =
    R"(Read the following two responses to the same prompt. After reading, determine why the preferred response is chosen over the dispreferred response, focusing on the aspect of the user's background knowledge.

Prompt: [{prompt}]

Preferred Response: [{chosen}]

Dispreferred Response: [{rejected}]

### Question

An arbitrary person labeled the responses as preferred and dispreferred.
What level of background knowledge does the user have that makes them prefer the preferred response over the dispreferred response?

Select one of the following options:

{option}

Finally you have to answer as following format:
- Answer is

Let's think step by step.)";

constexpr std::string_view kSingle =
    R"(Given a prompt and a response, analyze the response and determine which preference feature the response was likely based on. Focus on the aspect of {domain}.

Prompt: [{prompt}]

Response: [{response}]

### Question

An arbitrary person selected this response based on a preference for certain features within the domain of {domain}.
Considering the aspect of {domain}, what specific feature within this domain is the person likely prioritizing?

Select one of the following options:

{options}

Finally, provide your answer in the following format:
- Answer is [selected option Alphabet]

Let's think step-by-step.)";

constexpr std::string_view kSingleBackground =
    R"(Given a prompt and a response, analyze the response and determine which preference feature the response was likely based on, considering the user's background knowledge.

Prompt: [{prompt}]

Response: [{response}]

### Question

An arbitrary person selected this response based on a preference for certain features related to their background knowledge. Considering the aspect of the user's background knowledge, what specific feature is the person likely prioritizing?

Select one of the following options:

{options}

Finally, provide your answer in the following format:
- Answer is [selected option Alphabet]

Let's think step-by-step.)";

constexpr std::string_view kSynthesisSystem =
    R"(You are an excellent system message generator. Read the provided rule, system message examples, and preferences carefully)";

constexpr std::string_view kSynthesis =
    R"(I’m brainstorming system messages for personalizing language models. You are given some preferences made by human. 5 preferences are given, and each preference consists of the name of the preference and a description for it. Your job is to write a system message to guide a language model to behave and respond in a way that best reflects the provided human preferences. Please generate a creative and realistic system message. Refer to the given system message examples.

[Rule]
- Do NOT include any greeting messages.
- No bullet point style.
- The length of the system message should not be too long. Generate a system message that is about one paragraph in length.
- Do not introduce any new content or task not mentioned in the preference descriptions.
- Do not stick to expressions like "language model", "LLM", "Assistant", and "AI" unless the preference descriptions specifically refer to language model and assistant-related content.
- The system message should assign a role tailored to the preferences to the model.

[Preferences]
Style: {style}
Ensure your responses reflect the given style.

Tone: {tone}
Make sure the tone of your responses matches the given tone.

Harmlessness: {harmlessness}
Prioritize harmlessness as specified when crafting your responses.

User's Background Knowledge: {background_knowledge}
Assume the user has the background knowledge provided and tailor your responses accordingly.

Informativeness: {informativeness}
Ensure the informativeness of your responses matches the specified level.

[Generated system message])";

}  // namespace

std::string_view pairwise_extraction_template(Domain d) {
  return d == Domain::BackgroundKnowledge ? kPairwiseBackground : kPairwise;
}

std::string_view single_response_extraction_template(Domain d) {
  return d == Domain::BackgroundKnowledge ? kSingleBackground : kSingle;
}

std::string_view synthesis_template() { return kSynthesis; }

std::string_view synthesis_system_message() { return kSynthesisSystem; }

std::string option_block(Domain d) {
  std::string out;
  for (int j = 0; j < kSubFeatureCount; ++j) {
    if (j > 0) out += '\n';
    out += static_cast<char>('A' + j);
    out += ") ";
    out += sub_feature_name(d, j);
  }
  return out;
}

std::string substitute(std::string_view text, std::string_view key,
                       std::string_view value) {
  const std::string marker = "{" + std::string(key) + "}";
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t hit = text.find(marker, pos);
    if (hit == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, hit - pos));
    out.append(value);
    pos = hit + marker.size();
  }
  return out;
}

}  // namespace pfp
