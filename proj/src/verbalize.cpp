#include "factrank/verbalize.hpp"

namespace factrank {

namespace {

bool upper(char c) { return c >= 'A' && c <= 'Z'; }
bool lower(char c) { return c >= 'a' && c <= 'z'; }
bool digit(char c) { return c >= '0' && c <= '9'; }
char to_lower(char c) { return upper(c) ? static_cast<char>(c - 'A' + 'a') : c; }

} // namespace

std::string relation_phrase(std::string_view label) {
  std::string out;
  out.reserve(label.size() + 4);
  auto emit_space = [&out] {
    if (!out.empty() && out.back() != ' ') out.push_back(' ');
  };
  for (std::size_t i = 0; i < label.size(); ++i) {
    char c = label[i];
    if (c == '_' || c == ' ') {
      emit_space();
      continue;
    }
    if (upper(c)) {
      // Boundary at lower/digit->Upper and at the last capital of an acronym
      // run ("hasURLSource" -> "has url source").
      bool after_lower = i > 0 && (lower(label[i - 1]) || digit(label[i - 1]));
      bool acronym_end = i > 0 && upper(label[i - 1]) && i + 1 < label.size() && lower(label[i + 1]);
      if (after_lower || acronym_end) emit_space();
    }
    out.push_back(to_lower(c));
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string entity_phrase(std::string_view canonical_name) {
  std::string out(canonical_name);
  for (char& c : out) {
    if (c == '_') c = ' ';
  }
  return out;
}

VerbalizedTriple verbalize(const Triple& triple, const KbSnapshot& kb) {
  VerbalizedTriple out;
  out.id = triple.id;
  out.text = entity_phrase(kb.entity_name(triple.head));
  out.text.push_back(' ');
  out.text += relation_phrase(kb.relation_label(triple.relation));
  out.text.push_back(' ');
  out.text += entity_phrase(kb.entity_name(triple.tail));
  return out;
}

} // namespace factrank
