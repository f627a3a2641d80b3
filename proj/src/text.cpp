#include "factrank/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace factrank {

namespace {

bool is_token_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

char lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// Articles, prepositions, pronouns and auxiliaries; exactly 50 entries.
constexpr std::array<std::string_view, 50> kStopwords = {
    "a",       "an",      "the",
    "of",      "in",      "on",      "at",      "by",     "for",   "with",
    "from",    "to",      "into",    "over",    "under",  "about", "after",
    "before",  "between", "during",  "through", "against","within",
    "he",      "she",     "it",      "they",    "them",   "his",   "her",
    "its",     "their",   "i",       "you",     "we",     "me",    "us",
    "is",      "are",     "was",     "were",    "be",     "been",  "being",
    "am",      "has",     "have",    "had",     "do",     "does",
};

} // namespace

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

bool is_ascii_space(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::span<const std::string_view> stopword_list() {
  return kStopwords;
}

bool is_stopword(std::string_view normalized_token) {
  return std::find(kStopwords.begin(), kStopwords.end(), normalized_token) !=
         kStopwords.end();
}

std::vector<Token> scan_tokens(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, kMaskToken.size(), kMaskToken) == 0) {
      Token t;
      t.begin = i;
      t.end = i + kMaskToken.size();
      t.is_mask = true;
      out.push_back(std::move(t));
      i += kMaskToken.size();
      continue;
    }
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (!is_token_byte(c)) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    Token t;
    t.begin = begin;
    t.end = i;
    t.norm.reserve(i - begin);
    for (std::size_t j = begin; j < i; ++j) t.norm.push_back(lower(text[j]));
    t.capitalized = text[begin] >= 'A' && text[begin] <= 'Z';
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (!is_token_byte(c)) {
      ++i;
      continue;
    }
    std::string tok;
    while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) {
      tok.push_back(lower(text[i]));
      ++i;
    }
    out.push_back(std::move(tok));
  }
  return out;
}

} // namespace factrank
