#pragma once

#include <string>
#include <string_view>

#include "pfp/taxonomy.hpp"

namespace pfp {

// Prompt templates held as static data. Placeholders are written as
// {name}; the background-knowledge domain has its own wording in both
// extraction variants.

// Pairwise preference extraction (placeholders {domain}, {prompt},
// {chosen}, {rejected}, {option}).
std::string_view pairwise_extraction_template(Domain d);

// Single-response extraction used by diagnostics (placeholders {domain},
// {prompt}, {response}, {options}).
std::string_view single_response_extraction_template(Domain d);

// System-prompt synthesis (placeholders {style}, {tone}, {harmlessness},
// {background_knowledge}, {informativeness}), plus its fixed system message.
std::string_view synthesis_template();
std::string_view synthesis_system_message();

// Lettered option block "A) ...\n...\nE) ..." in taxonomy order.
std::string option_block(Domain d);

// Replaces every occurrence of "{key}" in text with value.
std::string substitute(std::string_view text, std::string_view key,
                       std::string_view value);

}  // namespace pfp
