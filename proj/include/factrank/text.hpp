#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace factrank {

// Literal placeholder for a masked token in queries and training examples.
inline constexpr std::string_view kMaskToken = "[MASK]";

// One raw token of a text, with byte offsets into the source string.
// Mask placeholders are matched literally and flagged; they never take part
// in mention detection.
struct Token {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string norm;         // lowercased form ("" for mask placeholders)
  bool is_mask = false;
  bool capitalized = false; // surface starts with an ASCII uppercase letter
};

// Normalization rule shared by entity-name indexing, mention matching and the
// hashed embedding provider: ASCII-lowercase, split on underscore, whitespace
// and ASCII punctuation. Bytes >= 0x80 are kept verbatim.
std::vector<std::string> normalize_tokens(std::string_view text);

// Tokenize with byte offsets and mask-placeholder detection.
std::vector<Token> scan_tokens(std::string_view text);

// Fixed 50-word function-word list used by the gazetteer mention filter.
std::span<const std::string_view> stopword_list();
bool is_stopword(std::string_view normalized_token);

bool is_ascii_space(std::string_view text); // true if all bytes are spaces/tabs/newlines
std::string ascii_lower(std::string_view text);

} // namespace factrank
